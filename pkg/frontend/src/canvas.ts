// SVG graph canvas. Renders the workflow as a directed graph and turns
// pointer gestures into high-level intents; the studio owns the document
// and decides what actually mutates.
//
// Gestures (matching the product's conventions):
//   left-click empty canvas        -> create node there
//   ctrl-click node A, then B      -> draw edge A -> B
//   right-click node               -> toggle its run flag (green ring)
//   right-click empty canvas       -> toggle all run flags
//   alt-click node                 -> open the node property editor
//   alt-click empty canvas         -> open the project JSON editor
//   click node/edge + Delete       -> remove it

import type { ProjectDoc } from './model.js';
import { positionOf } from './model.js';

const SVG_NS = 'http://www.w3.org/2000/svg';
const NODE_W = 150;
const NODE_H = 54;

export type Selection =
  | { kind: 'node'; id: string }
  | { kind: 'edge'; from: string; to: string };

export interface CanvasIntents {
  createNode(x: number, y: number): void;
  addEdge(from: string, to: string): void;
  deleteSelection(selection: Selection): void;
  toggleRun(id: string): void;
  toggleAllRun(): void;
  openNodeEditor(id: string): void;
  openProjectEditor(): void;
  selectionChanged(selection: Selection | null): void;
  nodeMoved(id: string, x: number, y: number): void;
}

export class GraphCanvas {
  readonly svg: SVGSVGElement;
  private selection: Selection | null = null;
  private edgeSource: string | null = null;
  private doc: ProjectDoc | null = null;
  private busyNodes = new Set<string>();
  private drag: { id: string; dx: number; dy: number; moved: boolean } | null = null;

  constructor(private container: HTMLElement, private intents: CanvasIntents) {
    this.svg = document.createElementNS(SVG_NS, 'svg');
    this.svg.setAttribute('class', 'graph-canvas');
    this.svg.setAttribute('tabindex', '0');
    container.appendChild(this.svg);

    this.svg.addEventListener('keydown', (event) => this.onKeyDown(event));
    this.svg.addEventListener('pointermove', (event) => this.onPointerMove(event));
    this.svg.addEventListener('pointerup', () => this.onPointerUp());
  }

  get currentSelection(): Selection | null {
    return this.selection;
  }

  get pendingEdgeSource(): string | null {
    return this.edgeSource;
  }

  setBusy(id: string, busy: boolean): void {
    if (busy) this.busyNodes.add(id);
    else this.busyNodes.delete(id);
    this.refreshClasses();
  }

  clearSelection(): void {
    this.select(null);
  }

  render(doc: ProjectDoc): void {
    this.doc = doc;
    while (this.svg.firstChild) this.svg.removeChild(this.svg.firstChild);
    if (this.selection && !this.selectionStillValid(doc)) this.select(null);
    if (this.edgeSource && !doc.nodes[this.edgeSource]) this.edgeSource = null;

    const background = document.createElementNS(SVG_NS, 'rect');
    background.setAttribute('class', 'canvas-bg');
    background.setAttribute('width', '100%');
    background.setAttribute('height', '100%');
    background.addEventListener('click', (event) => this.onBackgroundClick(event));
    background.addEventListener('contextmenu', (event) => {
      event.preventDefault();
      this.intents.toggleAllRun();
    });
    this.svg.appendChild(background);

    for (const [id, node] of Object.entries(doc.nodes)) {
      for (const prior of node.priors) {
        if (doc.nodes[prior]) this.svg.appendChild(this.renderEdge(doc, prior, id));
      }
    }
    for (const id of Object.keys(doc.nodes)) {
      this.svg.appendChild(this.renderNode(doc, id));
    }
    this.refreshClasses();
  }

  private selectionStillValid(doc: ProjectDoc): boolean {
    if (!this.selection) return true;
    if (this.selection.kind === 'node') return !!doc.nodes[this.selection.id];
    const { from, to } = this.selection;
    return !!doc.nodes[to] && doc.nodes[to].priors.includes(from);
  }

  private renderEdge(doc: ProjectDoc, from: string, to: string): SVGElement {
    const a = positionOf(doc, from);
    const b = positionOf(doc, to);
    const group = document.createElementNS(SVG_NS, 'g');
    group.setAttribute('class', 'edge');
    group.setAttribute('data-edge-from', from);
    group.setAttribute('data-edge-to', to);

    const line = document.createElementNS(SVG_NS, 'line');
    line.setAttribute('x1', String(a.x + NODE_W / 2));
    line.setAttribute('y1', String(a.y));
    line.setAttribute('x2', String(b.x - NODE_W / 2));
    line.setAttribute('y2', String(b.y));
    group.appendChild(line);

    const head = document.createElementNS(SVG_NS, 'polygon');
    const hx = b.x - NODE_W / 2;
    head.setAttribute('points', `${hx},${b.y} ${hx - 10},${b.y - 5} ${hx - 10},${b.y + 5}`);
    head.setAttribute('class', 'edge-head');
    group.appendChild(head);

    group.addEventListener('click', (event) => {
      event.stopPropagation();
      this.select({ kind: 'edge', from, to });
    });
    return group;
  }

  private renderNode(doc: ProjectDoc, id: string): SVGElement {
    const node = doc.nodes[id];
    const pos = positionOf(doc, id);
    const group = document.createElementNS(SVG_NS, 'g');
    group.setAttribute('class', 'node');
    group.setAttribute('data-node-id', id);
    group.setAttribute('transform', `translate(${pos.x - NODE_W / 2}, ${pos.y - NODE_H / 2})`);

    // run ring: visible exactly when the node is marked to run
    if (node.run) {
      const ring = document.createElementNS(SVG_NS, 'rect');
      ring.setAttribute('class', 'run-ring');
      ring.setAttribute('x', '-5');
      ring.setAttribute('y', '-5');
      ring.setAttribute('width', String(NODE_W + 10));
      ring.setAttribute('height', String(NODE_H + 10));
      ring.setAttribute('rx', '12');
      group.appendChild(ring);
    }

    const box = document.createElementNS(SVG_NS, 'rect');
    box.setAttribute('class', 'node-box');
    box.setAttribute('width', String(NODE_W));
    box.setAttribute('height', String(NODE_H));
    box.setAttribute('rx', '8');
    group.appendChild(box);

    const key = document.createElementNS(SVG_NS, 'text');
    key.setAttribute('class', 'node-key');
    key.setAttribute('x', '10');
    key.setAttribute('y', '20');
    key.textContent = id;
    group.appendChild(key);

    const label = document.createElementNS(SVG_NS, 'text');
    label.setAttribute('class', 'node-label');
    label.setAttribute('x', '10');
    label.setAttribute('y', '40');
    label.textContent = node.name || '(unnamed)';
    group.appendChild(label);

    group.addEventListener('click', (event) => {
      event.stopPropagation();
      this.onNodeClick(event, id);
    });
    group.addEventListener('contextmenu', (event) => {
      event.preventDefault();
      event.stopPropagation();
      this.intents.toggleRun(id);
    });
    group.addEventListener('pointerdown', (event) => {
      if (event.ctrlKey || event.altKey || event.button !== 0) return;
      const here = positionOf(doc, id);
      this.drag = {
        id,
        dx: here.x - event.clientX,
        dy: here.y - event.clientY,
        moved: false,
      };
    });
    return group;
  }

  private onNodeClick(event: MouseEvent, id: string): void {
    if (this.drag?.moved) return; // drop, not a click
    if (event.altKey) {
      this.intents.openNodeEditor(id);
      return;
    }
    if (event.ctrlKey) {
      if (this.edgeSource === null) {
        this.edgeSource = id;
        this.refreshClasses();
      } else if (this.edgeSource !== id) {
        const from = this.edgeSource;
        this.edgeSource = null;
        this.intents.addEdge(from, id);
      } else {
        this.edgeSource = null;
        this.refreshClasses();
      }
      return;
    }
    this.select({ kind: 'node', id });
  }

  private onBackgroundClick(event: MouseEvent): void {
    if (event.altKey) {
      this.intents.openProjectEditor();
      return;
    }
    if (event.ctrlKey) {
      this.edgeSource = null;
      this.refreshClasses();
      return;
    }
    const rect = this.svg.getBoundingClientRect();
    this.intents.createNode(event.clientX - rect.left, event.clientY - rect.top);
  }

  private onKeyDown(event: KeyboardEvent): void {
    if ((event.key === 'Delete' || event.key === 'Backspace') && this.selection) {
      event.preventDefault();
      const selection = this.selection;
      this.select(null);
      this.intents.deleteSelection(selection);
    } else if (event.key === 'Escape') {
      this.edgeSource = null;
      this.select(null);
    }
  }

  private onPointerMove(event: PointerEvent): void {
    if (!this.drag || !this.doc) return;
    this.drag.moved = true;
    const group = this.svg.querySelector(`[data-node-id="${this.drag.id}"]`);
    const x = event.clientX + this.drag.dx;
    const y = event.clientY + this.drag.dy;
    group?.setAttribute('transform', `translate(${x - NODE_W / 2}, ${y - NODE_H / 2})`);
  }

  private onPointerUp(): void {
    if (!this.drag) return;
    const { id, moved } = this.drag;
    const group = this.svg.querySelector(`[data-node-id="${id}"]`);
    this.drag = null;
    if (!moved || !group) return;
    const match = /translate\(([-\d.]+), ([-\d.]+)\)/.exec(
      group.getAttribute('transform') ?? '',
    );
    if (match) {
      this.intents.nodeMoved(id, Number(match[1]) + NODE_W / 2, Number(match[2]) + NODE_H / 2);
    }
  }

  private select(selection: Selection | null): void {
    this.selection = selection;
    this.refreshClasses();
    this.intents.selectionChanged(selection);
  }

  private refreshClasses(): void {
    for (const el of this.svg.querySelectorAll('.node')) {
      const id = el.getAttribute('data-node-id')!;
      el.classList.toggle(
        'selected',
        this.selection?.kind === 'node' && this.selection.id === id,
      );
      el.classList.toggle('edge-source', this.edgeSource === id);
      el.classList.toggle('busy', this.busyNodes.has(id));
    }
    for (const el of this.svg.querySelectorAll('.edge')) {
      const from = el.getAttribute('data-edge-from');
      const to = el.getAttribute('data-edge-to');
      el.classList.toggle(
        'selected',
        this.selection?.kind === 'edge' &&
          this.selection.from === from &&
          this.selection.to === to,
      );
    }
  }
}
