// Chat pane: streams agent messages, raises approval dialogs, and tells the
// studio to refresh the canvas when the agent edits process.json.

import type { ServiceClient, SseEvent } from './api.js';

export interface ChatHooks {
  projectUpdated(projectDoc: unknown): void;
}

export class ChatPane {
  private sessionId: string | null = null;
  private log: HTMLElement;
  private dialogs: HTMLElement;
  private input: HTMLTextAreaElement;
  private sendButton: HTMLButtonElement;
  private projectName = '';

  constructor(
    private root: HTMLElement,
    private client: ServiceClient,
    private hooks: ChatHooks,
  ) {
    root.classList.add('chat-pane');
    this.log = document.createElement('div');
    this.log.className = 'chat-log';
    root.appendChild(this.log);

    this.dialogs = document.createElement('div');
    this.dialogs.className = 'chat-dialogs';
    root.appendChild(this.dialogs);

    const controls = document.createElement('div');
    controls.className = 'chat-controls';
    this.input = document.createElement('textarea');
    this.input.className = 'chat-input';
    this.input.placeholder = 'Ask about the workflow, or ask for changes';
    controls.appendChild(this.input);

    this.sendButton = document.createElement('button');
    this.sendButton.className = 'chat-send';
    this.sendButton.textContent = 'Send';
    this.sendButton.addEventListener('click', () => void this.send());
    controls.appendChild(this.sendButton);
    root.appendChild(controls);
  }

  setProject(name: string): void {
    if (name !== this.projectName) {
      this.projectName = name;
      this.sessionId = null;
      this.log.innerHTML = '';
      this.dialogs.innerHTML = '';
    }
  }

  private append(kind: string, text: string): HTMLElement {
    const entry = document.createElement('div');
    entry.className = `chat-msg ${kind}`;
    entry.textContent = text;
    this.log.appendChild(entry);
    this.log.scrollTop = this.log.scrollHeight;
    return entry;
  }

  async send(message?: string): Promise<void> {
    const text = message ?? this.input.value.trim();
    if (!text || !this.projectName) return;
    this.input.value = '';
    this.append('user', text);
    this.sendButton.disabled = true;
    try {
      await this.client.chat(this.projectName, text, this.sessionId, (event) =>
        this.onEvent(event),
      );
    } catch (err) {
      this.append('error', `chat failed: ${(err as Error).message}`);
    } finally {
      this.sendButton.disabled = false;
    }
  }

  private onEvent(event: SseEvent): void {
    switch (event.event) {
      case 'session':
        this.sessionId = event.data.session_id;
        break;
      case 'chat_message':
        this.append('agent', event.data.text);
        break;
      case 'approval_request':
        this.showApprovalDialog(event.data);
        break;
      case 'project_updated':
        this.append('system', 'The agent updated the workflow.');
        this.hooks.projectUpdated(event.data.project);
        break;
      case 'chat_complete':
        this.append('system', `agent finished (${event.data.outcome})`);
        break;
      case 'error':
        this.append('error', event.data.message);
        break;
    }
  }

  private showApprovalDialog(data: {
    session_id: string;
    request_id: string;
    description: string;
  }): void {
    const dialog = document.createElement('div');
    dialog.className = 'approval-dialog';
    dialog.setAttribute('data-request-id', data.request_id);

    const label = document.createElement('p');
    label.textContent = `The agent wants to: ${data.description}`;
    dialog.appendChild(label);

    const decide = (approve: boolean) => {
      dialog.remove();
      this.append('system', approve ? 'You allowed the action.' : 'You denied the action.');
      void this.client.approve(data.session_id, data.request_id, approve);
    };

    const allow = document.createElement('button');
    allow.className = 'approve-allow';
    allow.textContent = 'Allow';
    allow.addEventListener('click', () => decide(true));
    dialog.appendChild(allow);

    const deny = document.createElement('button');
    deny.className = 'approve-deny';
    deny.textContent = 'Deny';
    deny.addEventListener('click', () => decide(false));
    dialog.appendChild(deny);

    this.dialogs.appendChild(dialog);
  }
}
