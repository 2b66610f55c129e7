// Client-side view of the process.json document plus the graph helpers the
// canvas needs (cycle checks, fresh node ids). The server stays the source
// of truth: every mutation is PUT back and re-rendered from its canonical
// serialization; unknown keys (like our _ui layout block) ride along.

export interface NodeIO {
  text: string;
  files: string[];
}

export interface WorkflowNode {
  name: string;
  description: string;
  priors: string[];
  run: boolean;
  input: NodeIO;
  output: NodeIO;
  [extra: string]: unknown;
}

export interface NodePosition {
  x: number;
  y: number;
}

export interface ProjectDoc {
  process_name: string;
  process_description: string;
  nodes: Record<string, WorkflowNode>;
  _ui?: { positions?: Record<string, NodePosition> };
  [extra: string]: unknown;
}

export interface Diagnostic {
  severity: 'error' | 'warning';
  code: string;
  message: string;
}

function flattenPriors(raw: unknown): string[] {
  const out: string[] = [];
  const walk = (item: unknown) => {
    if (Array.isArray(item)) {
      item.forEach(walk);
    } else if (typeof item === 'string') {
      out.push(item);
    }
  };
  walk(raw ?? []);
  return out;
}

/** Fill defaults and flatten priors so the UI can rely on the shape. */
export function normalizeDoc(raw: unknown): ProjectDoc {
  const doc = (raw && typeof raw === 'object' ? raw : {}) as Record<string, unknown>;
  const nodes: Record<string, WorkflowNode> = {};
  const rawNodes = (doc.nodes ?? {}) as Record<string, Record<string, unknown>>;
  for (const [id, rawNode] of Object.entries(rawNodes)) {
    const io = (side: unknown): NodeIO => {
      const s = (side ?? {}) as Record<string, unknown>;
      return {
        text: typeof s.text === 'string' ? s.text : '',
        files: Array.isArray(s.files) ? s.files.filter((f) => typeof f === 'string') : [],
      };
    };
    nodes[id] = {
      ...rawNode,
      name: typeof rawNode.name === 'string' ? rawNode.name : '',
      description: typeof rawNode.description === 'string' ? rawNode.description : '',
      priors: flattenPriors(rawNode.priors),
      run: rawNode.run === true,
      input: io(rawNode.input),
      output: io(rawNode.output),
    };
  }
  return {
    ...doc,
    process_name: typeof doc.process_name === 'string' ? doc.process_name : '',
    process_description:
      typeof doc.process_description === 'string' ? doc.process_description : '',
    nodes,
  };
}

export function cloneDoc(doc: ProjectDoc): ProjectDoc {
  return JSON.parse(JSON.stringify(doc)) as ProjectDoc;
}

/** Smallest unused positive integer, as a string (matches existing numeric keys). */
export function nextNodeId(doc: ProjectDoc): string {
  const used = new Set(Object.keys(doc.nodes));
  for (let i = 1; ; i++) {
    if (!used.has(String(i))) return String(i);
  }
}

/** Mirror of the engine's folder-name rule, for display hints. */
export function sanitizeName(name: string): string {
  const trimmed = name.trim();
  return [...trimmed]
    .map((ch) => (/[a-zA-Z0-9]/.test(ch) ? ch.toLowerCase() : '_'))
    .join('');
}

function successorsOf(doc: ProjectDoc, id: string): string[] {
  return Object.entries(doc.nodes)
    .filter(([, node]) => node.priors.includes(id))
    .map(([nid]) => nid);
}

/** Would adding the edge prior->dependent close a cycle? */
export function wouldCreateCycle(doc: ProjectDoc, prior: string, dependent: string): boolean {
  if (prior === dependent) return true;
  // a cycle appears iff the prior is already reachable from the dependent
  const seen = new Set<string>();
  const stack = [dependent];
  while (stack.length) {
    const current = stack.pop()!;
    if (current === prior) return true;
    if (seen.has(current)) continue;
    seen.add(current);
    stack.push(...successorsOf(doc, current));
  }
  return false;
}

function findCycle(doc: ProjectDoc): string[] | null {
  const WHITE = 0, GRAY = 1, BLACK = 2;
  const color: Record<string, number> = {};
  const path: string[] = [];
  const ids = Object.keys(doc.nodes);
  const visit = (id: string): string[] | null => {
    color[id] = GRAY;
    path.push(id);
    for (const succ of successorsOf(doc, id)) {
      if ((color[succ] ?? WHITE) === GRAY) return path.slice(path.indexOf(succ));
      if ((color[succ] ?? WHITE) === WHITE) {
        const found = visit(succ);
        if (found) return found;
      }
    }
    color[id] = BLACK;
    path.pop();
    return null;
  };
  for (const id of ids) {
    if ((color[id] ?? WHITE) === WHITE) {
      const found = visit(id);
      if (found) return found;
    }
  }
  return null;
}

/** Lightweight client-side validation for editor feedback before a PUT. */
export function validateDoc(doc: ProjectDoc): Diagnostic[] {
  const diagnostics: Diagnostic[] = [];
  const ids = new Set(Object.keys(doc.nodes));
  const byFolder = new Map<string, string[]>();

  for (const [id, node] of Object.entries(doc.nodes)) {
    const missing = node.priors.filter((p) => !ids.has(p));
    if (missing.length) {
      diagnostics.push({
        severity: 'error',
        code: 'dangling_prior',
        message: `node ${id} lists unknown prior(s): ${missing.join(', ')}`,
      });
    }
    if (node.priors.includes(id)) {
      diagnostics.push({
        severity: 'error',
        code: 'self_prior',
        message: `node ${id} lists itself as a prior`,
      });
    }
    if (node.run && !node.input.text.trim()) {
      diagnostics.push({
        severity: 'warning',
        code: 'empty_task',
        message: `node ${id} is marked to run but has no task text`,
      });
    }
    if (!node.name.trim()) {
      diagnostics.push({
        severity: 'error',
        code: 'empty_name',
        message: `node ${id} has an empty display name`,
      });
    } else {
      const folder = sanitizeName(node.name);
      byFolder.set(folder, [...(byFolder.get(folder) ?? []), id]);
    }
  }
  for (const [folder, nids] of byFolder) {
    if (nids.length > 1) {
      diagnostics.push({
        severity: 'error',
        code: 'duplicate_sanitized_name',
        message: `nodes ${nids.join(', ')} all map to folder ${folder}`,
      });
    }
  }
  const cycle = findCycle(doc);
  if (cycle) {
    diagnostics.push({
      severity: 'error',
      code: 'cycle',
      message: `dependency cycle: ${cycle.join(' -> ')}`,
    });
  }
  return diagnostics;
}

export function emptyNode(): WorkflowNode {
  return {
    name: '',
    description: '',
    priors: [],
    run: false,
    input: { text: '', files: [] },
    output: { text: '', files: [] },
  };
}

/** Deterministic fallback layout: columns by dependency depth. */
export function autoPosition(doc: ProjectDoc, id: string): NodePosition {
  const depth = (nid: string, seen: Set<string>): number => {
    if (seen.has(nid)) return 0;
    seen.add(nid);
    const node = doc.nodes[nid];
    if (!node || !node.priors.length) return 0;
    return 1 + Math.max(...node.priors.map((p) => depth(p, seen)));
  };
  const column = depth(id, new Set());
  const siblings = Object.keys(doc.nodes)
    .filter((nid) => depth(nid, new Set()) === column)
    .sort();
  const row = siblings.indexOf(id);
  return { x: 120 + column * 220, y: 80 + row * 110 };
}

export function positionOf(doc: ProjectDoc, id: string): NodePosition {
  return doc._ui?.positions?.[id] ?? autoPosition(doc, id);
}

export function setPosition(doc: ProjectDoc, id: string, pos: NodePosition): void {
  if (!doc._ui) doc._ui = {};
  if (!doc._ui.positions) doc._ui.positions = {};
  doc._ui.positions[id] = { x: Math.round(pos.x), y: Math.round(pos.y) };
}
