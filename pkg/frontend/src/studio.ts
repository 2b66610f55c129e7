// The studio application: wires the canvas, cells, chat, and files panels
// to the service. Every canvas mutation round-trips through PUT
// process.json and re-renders from the server's canonical document.

import { ServiceClient, SseEvent } from './api.js';
import { GraphCanvas, Selection } from './canvas.js';
import { CellsPanel } from './cells.js';
import { ChatPane } from './chat.js';
import {
  FilesPanel,
  openNodeEditor,
  openProjectEditor,
  toast,
} from './panels.js';
import {
  NodePosition,
  ProjectDoc,
  cloneDoc,
  emptyNode,
  nextNodeId,
  normalizeDoc,
  setPosition,
  validateDoc,
  wouldCreateCycle,
} from './model.js';

export class Studio {
  readonly canvas: GraphCanvas;
  readonly cells: CellsPanel;
  readonly chat: ChatPane;
  readonly files: FilesPanel;
  doc: ProjectDoc | null = null;
  projectName = '';
  running = false;
  private selected: Selection | null = null;
  // Local layout survives server documents that lack _ui positions, so a
  // chat-agent rewrite of process.json never scrambles the canvas.
  private layoutCache: Record<string, NodePosition> = {};
  private putChain: Promise<void> = Promise.resolve();

  constructor(
    private client: ServiceClient,
    mount: {
      canvas: HTMLElement;
      cells: HTMLElement;
      chat: HTMLElement;
      files: HTMLElement;
    },
  ) {
    this.canvas = new GraphCanvas(mount.canvas, {
      createNode: (x, y) => void this.createNode(x, y),
      addEdge: (from, to) => void this.addEdge(from, to),
      deleteSelection: (sel) => void this.deleteSelection(sel),
      toggleRun: (id) => void this.toggleRun(id),
      toggleAllRun: () => void this.toggleAllRun(),
      openNodeEditor: (id) => this.editNode(id),
      openProjectEditor: () => this.editProject(),
      selectionChanged: (sel) => this.onSelectionChanged(sel),
      nodeMoved: (id, x, y) => void this.moveNode(id, x, y),
    });
    this.cells = new CellsPanel(mount.cells, client, {
      inputTextChanged: (id, text) => void this.setInputText(id, text),
      clearCodeAndRerun: (id) => void this.clearCodeAndRerun(id),
      attachmentPicked: (id, file) => void this.attach(id, file),
    });
    this.chat = new ChatPane(mount.chat, client, {
      projectUpdated: (project) => this.onAgentEdit(project),
    });
    this.files = new FilesPanel(mount.files, client);
  }

  async open(projectName: string): Promise<void> {
    this.projectName = projectName;
    this.chat.setProject(projectName);
    this.doc = await this.client.getProject(projectName);
    this.rememberLayout();
    this.renderAll();
  }

  /** Wait until queued mutations have round-tripped (used by tests). */
  settle(): Promise<void> {
    return this.putChain;
  }

  private rememberLayout(): void {
    const positions = this.doc?._ui?.positions;
    if (positions) this.layoutCache = { ...this.layoutCache, ...positions };
  }

  private docForRender(): ProjectDoc {
    const doc = cloneDoc(this.doc!);
    const positions = { ...this.layoutCache, ...(doc._ui?.positions ?? {}) };
    doc._ui = { ...(doc._ui ?? {}), positions };
    return doc;
  }

  renderAll(): void {
    if (!this.doc) return;
    this.canvas.render(this.docForRender());
    const nodeId = this.selected?.kind === 'node' ? this.selected.id : null;
    this.cells.render(this.doc, this.projectName, nodeId);
  }

  private onSelectionChanged(selection: Selection | null): void {
    this.selected = selection;
    if (!this.doc) return;
    const nodeId = selection?.kind === 'node' ? selection.id : null;
    this.cells.render(this.doc, this.projectName, nodeId);
  }

  /**
   * Apply a mutation, push it to the server, and re-render from the
   * server's canonical document. Rejected documents are discarded.
   */
  mutate(change: (doc: ProjectDoc) => void): Promise<void> {
    const task = async () => {
      if (!this.doc) return;
      const draft = cloneDoc(this.doc);
      change(draft);
      const result = await this.client.putProject(this.projectName, draft);
      if (!result.ok) {
        for (const diag of result.diagnostics.filter((d) => d.severity === 'error')) {
          toast(diag.message, 'error');
        }
        return;
      }
      this.doc = await this.client.getProject(this.projectName);
      this.rememberLayout();
      this.renderAll();
    };
    this.putChain = this.putChain.then(task, task);
    return this.putChain;
  }

  async createNode(x: number, y: number): Promise<void> {
    await this.mutate((doc) => {
      const id = nextNodeId(doc);
      const node = emptyNode();
      node.name = `node ${id}`;
      doc.nodes[id] = node;
      setPosition(doc, id, { x, y });
      this.layoutCache[id] = { x: Math.round(x), y: Math.round(y) };
    });
  }

  async addEdge(from: string, to: string): Promise<void> {
    if (!this.doc) return;
    if (wouldCreateCycle(this.doc, from, to)) {
      toast(`edge ${from} → ${to} would create a cycle`, 'error');
      return;
    }
    await this.mutate((doc) => {
      const node = doc.nodes[to];
      if (node && !node.priors.includes(from)) node.priors.push(from);
    });
  }

  async deleteSelection(selection: Selection): Promise<void> {
    await this.mutate((doc) => {
      if (selection.kind === 'node') {
        delete doc.nodes[selection.id];
        delete doc._ui?.positions?.[selection.id];
        for (const node of Object.values(doc.nodes)) {
          node.priors = node.priors.filter((p) => p !== selection.id);
        }
      } else {
        const node = doc.nodes[selection.to];
        if (node) node.priors = node.priors.filter((p) => p !== selection.from);
      }
    });
  }

  async toggleRun(id: string): Promise<void> {
    await this.mutate((doc) => {
      const node = doc.nodes[id];
      if (node) node.run = !node.run;
    });
  }

  async toggleAllRun(): Promise<void> {
    await this.mutate((doc) => {
      for (const node of Object.values(doc.nodes)) node.run = !node.run;
    });
  }

  async moveNode(id: string, x: number, y: number): Promise<void> {
    this.layoutCache[id] = { x: Math.round(x), y: Math.round(y) };
    await this.mutate((doc) => setPosition(doc, id, { x, y }));
  }

  async setInputText(id: string, text: string): Promise<void> {
    await this.mutate((doc) => {
      const node = doc.nodes[id];
      if (node) node.input.text = text;
    });
  }

  private editNode(id: string): void {
    if (!this.doc) return;
    openNodeEditor(this.doc, id, (node) => {
      void this.mutate((doc) => {
        doc.nodes[id] = normalizeDoc({ nodes: { [id]: node } }).nodes[id];
      });
    });
  }

  private editProject(): void {
    if (!this.doc) return;
    openProjectEditor(this.doc, (raw) => {
      const candidate = normalizeDoc(raw);
      const errors = validateDoc(candidate).filter((d) => d.severity === 'error');
      if (errors.length) {
        for (const diag of errors) toast(diag.message, 'error');
        return;
      }
      void this.mutate((doc) => {
        for (const key of Object.keys(doc)) delete (doc as any)[key];
        Object.assign(doc, candidate);
      });
    });
  }

  private onAgentEdit(project: unknown): void {
    // tandem editing: the chat agent rewrote process.json; re-render the
    // canvas from the broadcast document without losing local layout
    this.doc = normalizeDoc(project);
    this.rememberLayout();
    this.renderAll();
  }

  async runProcess(nodes?: string[]): Promise<void> {
    if (!this.doc || this.running) return;
    this.running = true;
    try {
      await this.client.run(
        this.projectName,
        nodes ? { nodes } : {},
        (event) => this.onRunEvent(event),
      );
      await this.files.refresh(this.projectName).catch(() => undefined);
    } catch (err) {
      toast(`run failed: ${(err as Error).message}`, 'error');
    } finally {
      this.running = false;
    }
  }

  private onRunEvent(event: SseEvent): void {
    switch (event.event) {
      case 'node_started':
        this.canvas.setBusy(event.data.node_id, true);
        break;
      case 'node_finished': {
        const { node_id, summary_text, new_files, status } = event.data;
        this.canvas.setBusy(node_id, false);
        if (this.doc?.nodes[node_id]) {
          this.doc.nodes[node_id].output.text = summary_text ?? '';
          this.doc.nodes[node_id].output.files = new_files ?? [];
        }
        this.cells.showRunResult(node_id, summary_text ?? '', new_files ?? []);
        if (status !== 'success') toast(`node ${node_id}: ${status}`, 'error');
        break;
      }
      case 'run_complete':
        this.doc = normalizeDoc(event.data.project);
        this.rememberLayout();
        this.renderAll();
        break;
      case 'error':
        toast(event.data.message, 'error');
        break;
    }
  }

  async clearCodeAndRerun(nodeId: string): Promise<void> {
    try {
      await this.client.clearCode(this.projectName, nodeId);
    } catch (err) {
      toast(`clear-code failed: ${(err as Error).message}`, 'error');
      return;
    }
    await this.runProcess([nodeId]);
  }

  async attach(nodeId: string, file: File): Promise<void> {
    try {
      await this.client.uploadAttachment(this.projectName, nodeId, file);
      this.doc = await this.client.getProject(this.projectName);
      this.renderAll();
    } catch (err) {
      toast(`upload failed: ${(err as Error).message}`, 'error');
    }
  }
}

/** Build the full studio chrome inside `root` and return the app object. */
export function bootStudio(root: HTMLElement, client?: ServiceClient): Studio {
  const service = client ?? new ServiceClient('');
  root.innerHTML = `
    <header class="topbar">
      <span class="brand">skele studio</span>
      <select class="project-select"></select>
      <button class="new-project">New project</button>
      <button class="run-process">Run process</button>
    </header>
    <main class="layout">
      <section class="canvas-host"></section>
      <aside class="sidebar">
        <nav class="tabs">
          <button data-tab="cells" class="active">Cells</button>
          <button data-tab="chat">Chat</button>
          <button data-tab="files">Files</button>
        </nav>
        <div class="tab-body" data-tab-body="cells"></div>
        <div class="tab-body" data-tab-body="chat" hidden></div>
        <div class="tab-body" data-tab-body="files" hidden></div>
      </aside>
    </main>`;

  const studio = new Studio(service, {
    canvas: root.querySelector<HTMLElement>('.canvas-host')!,
    cells: root.querySelector<HTMLElement>('[data-tab-body="cells"]')!,
    chat: root.querySelector<HTMLElement>('[data-tab-body="chat"]')!,
    files: root.querySelector<HTMLElement>('[data-tab-body="files"]')!,
  });

  const select = root.querySelector<HTMLSelectElement>('.project-select')!;
  select.addEventListener('change', () => void studio.open(select.value));
  root.querySelector('.run-process')!.addEventListener('click', () => {
    void studio.runProcess();
  });
  root.querySelector('.new-project')!.addEventListener('click', () => {
    const name = prompt('Project name?');
    if (!name) return;
    void service.createProject(name).then(async () => {
      await refreshProjects();
      select.value = name;
      await studio.open(name);
    });
  });
  for (const tab of root.querySelectorAll<HTMLButtonElement>('.tabs button')) {
    tab.addEventListener('click', () => {
      for (const other of root.querySelectorAll<HTMLButtonElement>('.tabs button')) {
        other.classList.toggle('active', other === tab);
      }
      for (const body of root.querySelectorAll<HTMLElement>('.tab-body')) {
        body.hidden = body.getAttribute('data-tab-body') !== tab.dataset.tab;
      }
      if (tab.dataset.tab === 'files' && studio.projectName) {
        void studio.files.refresh(studio.projectName);
      }
    });
  }

  async function refreshProjects(): Promise<void> {
    const names = await service.listProjects();
    select.innerHTML = '';
    for (const name of names) {
      const option = document.createElement('option');
      option.value = name;
      option.textContent = name;
      select.appendChild(option);
    }
  }

  void refreshProjects().then(async () => {
    if (select.value) await studio.open(select.value);
  });
  return studio;
}
