// Thin client over the service REST + SSE API. The fetch implementation is
// injectable so the contract tests can run against a fully mocked service.

import type { ProjectDoc } from './model.js';
import { normalizeDoc } from './model.js';

export interface SseEvent {
  event: string;
  data: any;
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export interface PutResult {
  ok: boolean;
  status: number;
  diagnostics: { severity: string; code: string; message: string }[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function errorOf(response: Response): Promise<ApiError> {
  let message = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.error === 'string') message = body.error;
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(response.status, message);
}

/** Parse an SSE byte stream into (event, data) pairs. */
export async function consumeSse(
  response: Response,
  onEvent: (event: SseEvent) => void,
): Promise<void> {
  if (!response.body) throw new Error('response has no body to stream');
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  let buffer = '';
  const handleFrame = (frame: string) => {
    let event = 'message';
    let data = '';
    for (const line of frame.split('\n')) {
      if (line.startsWith('event: ')) event = line.slice(7).trim();
      else if (line.startsWith('data: ')) data += line.slice(6);
    }
    if (data) onEvent({ event, data: JSON.parse(data) });
  };
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    let split;
    while ((split = buffer.indexOf('\n\n')) >= 0) {
      const frame = buffer.slice(0, split);
      buffer = buffer.slice(split + 2);
      if (frame.trim()) handleFrame(frame);
    }
  }
  if (buffer.trim()) handleFrame(buffer);
}

export class ServiceClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: FetchFn = (input, init) => globalThis.fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async listProjects(): Promise<string[]> {
    const r = await this.fetchFn(this.url('/api/projects'));
    if (!r.ok) throw await errorOf(r);
    return (await r.json()).projects;
  }

  async createProject(name: string): Promise<void> {
    const r = await this.fetchFn(this.url('/api/projects'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ name }),
    });
    if (!r.ok) throw await errorOf(r);
  }

  async getProject(name: string): Promise<ProjectDoc> {
    const r = await this.fetchFn(this.url(`/api/projects/${name}/process.json`));
    if (!r.ok) throw await errorOf(r);
    return normalizeDoc(await r.json());
  }

  async putProject(name: string, doc: ProjectDoc): Promise<PutResult> {
    const r = await this.fetchFn(this.url(`/api/projects/${name}/process.json`), {
      method: 'PUT',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(doc, null, 4),
    });
    if (r.status === 422) {
      const body = await r.json();
      return { ok: false, status: 422, diagnostics: body.diagnostics ?? [] };
    }
    if (!r.ok) throw await errorOf(r);
    const body = await r.json();
    return { ok: true, status: r.status, diagnostics: body.diagnostics ?? [] };
  }

  async run(
    name: string,
    body: { nodes?: string[]; mode?: string },
    onEvent: (event: SseEvent) => void,
  ): Promise<void> {
    const r = await this.fetchFn(this.url(`/api/projects/${name}/run`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!r.ok) throw await errorOf(r);
    await consumeSse(r, onEvent);
  }

  async clearCode(name: string, nodeId: string): Promise<void> {
    const r = await this.fetchFn(
      this.url(`/api/projects/${name}/nodes/${nodeId}/clear-code`),
      { method: 'POST' },
    );
    if (!r.ok) throw await errorOf(r);
  }

  async chat(
    name: string,
    message: string,
    sessionId: string | null,
    onEvent: (event: SseEvent) => void,
  ): Promise<void> {
    const body: Record<string, unknown> = { message };
    if (sessionId) body.session_id = sessionId;
    const r = await this.fetchFn(this.url(`/api/projects/${name}/chat`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!r.ok) throw await errorOf(r);
    await consumeSse(r, onEvent);
  }

  async approve(
    sessionId: string,
    requestId: string,
    approve: boolean,
    blanket = false,
  ): Promise<void> {
    const r = await this.fetchFn(this.url(`/api/chat/${sessionId}/approve`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ request_id: requestId, approve, blanket }),
    });
    if (!r.ok) throw await errorOf(r);
  }

  async listFiles(name: string): Promise<{ path: string; size: number }[]> {
    const r = await this.fetchFn(this.url(`/api/projects/${name}/files`));
    if (!r.ok) throw await errorOf(r);
    return (await r.json()).files;
  }

  fileUrl(name: string, path: string): string {
    return this.url(`/api/projects/${name}/files/${path}`);
  }

  async uploadAttachment(name: string, nodeId: string, file: File): Promise<void> {
    const form = new FormData();
    form.append('file', file, file.name);
    const r = await this.fetchFn(
      this.url(`/api/projects/${name}/nodes/${nodeId}/attachments`),
      { method: 'POST', body: form },
    );
    if (!r.ok) throw await errorOf(r);
  }
}
