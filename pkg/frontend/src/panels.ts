// Small supporting UI: toasts, the file browser, and the JSON/property
// editors opened by alt-clicking.

import type { ServiceClient } from './api.js';
import type { ProjectDoc, WorkflowNode } from './model.js';

export function toast(message: string, kind: 'info' | 'error' = 'info'): void {
  let host = document.querySelector<HTMLElement>('.toast-host');
  if (!host) {
    host = document.createElement('div');
    host.className = 'toast-host';
    document.body.appendChild(host);
  }
  const entry = document.createElement('div');
  entry.className = `toast ${kind}`;
  entry.textContent = message;
  host.appendChild(entry);
  setTimeout(() => entry.remove(), 4000);
}

export class FilesPanel {
  constructor(private root: HTMLElement, private client: ServiceClient) {
    root.classList.add('files-panel');
  }

  async refresh(projectName: string): Promise<void> {
    const files = await this.client.listFiles(projectName);
    this.root.innerHTML = '';
    const list = document.createElement('ul');
    list.className = 'file-list';
    for (const file of files) {
      const item = document.createElement('li');
      const link = document.createElement('a');
      link.textContent = `${file.path} (${file.size} B)`;
      link.href = this.client.fileUrl(projectName, file.path);
      link.target = '_blank'; // downloads open in a new tab
      item.appendChild(link);
      list.appendChild(item);
    }
    this.root.appendChild(list);
  }
}

interface EditorResult {
  save: boolean;
  text: string;
}

function modalEditor(
  title: string,
  initial: string,
  onClose: (result: EditorResult) => void,
): HTMLElement {
  const overlay = document.createElement('div');
  overlay.className = 'editor-overlay';

  const panel = document.createElement('div');
  panel.className = 'editor-panel';
  const heading = document.createElement('h3');
  heading.textContent = title;
  panel.appendChild(heading);

  const textarea = document.createElement('textarea');
  textarea.className = 'editor-text';
  textarea.value = initial;
  panel.appendChild(textarea);

  const buttons = document.createElement('div');
  buttons.className = 'editor-buttons';
  const save = document.createElement('button');
  save.className = 'editor-save';
  save.textContent = 'Save';
  save.addEventListener('click', () => {
    overlay.remove();
    onClose({ save: true, text: textarea.value });
  });
  const cancel = document.createElement('button');
  cancel.className = 'editor-cancel';
  cancel.textContent = 'Cancel';
  cancel.addEventListener('click', () => {
    overlay.remove();
    onClose({ save: false, text: textarea.value });
  });
  buttons.appendChild(save);
  buttons.appendChild(cancel);
  panel.appendChild(buttons);

  overlay.appendChild(panel);
  document.body.appendChild(overlay);
  return overlay;
}

/** Alt-click on a node: edit the node's raw JSON fragment. */
export function openNodeEditor(
  doc: ProjectDoc,
  nodeId: string,
  onSave: (node: WorkflowNode) => void,
): void {
  modalEditor(
    `Node ${nodeId}`,
    JSON.stringify(doc.nodes[nodeId], null, 2),
    (result) => {
      if (!result.save) return;
      try {
        onSave(JSON.parse(result.text) as WorkflowNode);
      } catch (err) {
        toast(`invalid node JSON: ${(err as Error).message}`, 'error');
      }
    },
  );
}

/** Alt-click on empty canvas: edit the whole project document. */
export function openProjectEditor(
  doc: ProjectDoc,
  onSave: (doc: unknown) => void,
): void {
  modalEditor('Project JSON', JSON.stringify(doc, null, 2), (result) => {
    if (!result.save) return;
    try {
      onSave(JSON.parse(result.text));
    } catch (err) {
      toast(`invalid project JSON: ${(err as Error).message}`, 'error');
    }
  });
}
