import { bootStudio } from './studio.js';

const root = document.getElementById('app');
if (root) bootStudio(root);
