// Notebook-style input/output cells for the selected node.

import type { ServiceClient } from './api.js';
import type { ProjectDoc } from './model.js';

export interface CellHandlers {
  inputTextChanged(nodeId: string, text: string): void;
  clearCodeAndRerun(nodeId: string): void;
  attachmentPicked(nodeId: string, file: File): void;
}

export class CellsPanel {
  private projectName = '';
  private nodeId: string | null = null;

  constructor(
    private root: HTMLElement,
    private client: ServiceClient,
    private handlers: CellHandlers,
  ) {
    root.classList.add('cells-panel');
    root.hidden = true;
  }

  get selectedNode(): string | null {
    return this.nodeId;
  }

  render(doc: ProjectDoc, projectName: string, nodeId: string | null): void {
    this.projectName = projectName;
    this.nodeId = nodeId;
    this.root.innerHTML = '';
    if (!nodeId || !doc.nodes[nodeId]) {
      this.root.hidden = true;
      return;
    }
    this.root.hidden = false;
    const node = doc.nodes[nodeId];

    const title = document.createElement('h2');
    title.className = 'cell-title';
    title.textContent = `${nodeId}: ${node.name || '(unnamed)'}`;
    this.root.appendChild(title);

    const inputCell = document.createElement('section');
    inputCell.className = 'cell input-cell';
    const inputLabel = document.createElement('label');
    inputLabel.textContent = 'Input';
    inputCell.appendChild(inputLabel);

    const textarea = document.createElement('textarea');
    textarea.className = 'input-text';
    textarea.value = node.input.text;
    textarea.placeholder = 'Describe this task in plain language';
    textarea.addEventListener('change', () => {
      this.handlers.inputTextChanged(nodeId, textarea.value);
    });
    inputCell.appendChild(textarea);

    const inputFiles = document.createElement('div');
    inputFiles.className = 'input-files';
    for (const file of node.input.files) {
      const chip = document.createElement('span');
      chip.className = 'chip';
      chip.textContent = file;
      inputFiles.appendChild(chip);
    }
    inputCell.appendChild(inputFiles);

    const upload = document.createElement('input');
    upload.type = 'file';
    upload.className = 'attach-input';
    upload.addEventListener('change', () => {
      const file = upload.files?.[0];
      if (file) this.handlers.attachmentPicked(nodeId, file);
    });
    inputCell.appendChild(upload);
    this.root.appendChild(inputCell);

    const outputCell = document.createElement('section');
    outputCell.className = 'cell output-cell';
    const outputLabel = document.createElement('label');
    outputLabel.textContent = 'Output';
    outputCell.appendChild(outputLabel);

    const text = document.createElement('pre');
    text.className = 'output-text';
    text.textContent = node.output.text;
    outputCell.appendChild(text);

    const chips = document.createElement('div');
    chips.className = 'output-files';
    for (const file of node.output.files) {
      const link = document.createElement('a');
      link.className = 'chip file-chip';
      link.textContent = file;
      link.href = this.client.fileUrl(this.projectName, file);
      link.target = '_blank';
      chips.appendChild(link);
    }
    outputCell.appendChild(chips);

    const rerun = document.createElement('button');
    rerun.className = 'clear-rerun';
    rerun.textContent = 'Clear code & rerun';
    rerun.addEventListener('click', () => this.handlers.clearCodeAndRerun(nodeId));
    outputCell.appendChild(rerun);
    this.root.appendChild(outputCell);
  }

  /** Live update from a node_finished event without waiting for a refetch. */
  showRunResult(nodeId: string, summary: string, files: string[]): void {
    if (nodeId !== this.nodeId) return;
    const text = this.root.querySelector<HTMLElement>('.output-text');
    if (text) text.textContent = summary;
    const chips = this.root.querySelector<HTMLElement>('.output-files');
    if (chips) {
      chips.innerHTML = '';
      for (const file of files) {
        const link = document.createElement('a');
        link.className = 'chip file-chip';
        link.textContent = file;
        link.href = this.client.fileUrl(this.projectName, file);
        link.target = '_blank';
        chips.appendChild(link);
      }
    }
  }
}
