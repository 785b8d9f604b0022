/** Session controller: the UI's single source of truth.
 *
 * Holds the view state (loaded parts, current plan, selection, undo stack)
 * and funnels every mutation through the service. Ops are validated
 * client-side with the same rules the engine enforces, then submitted;
 * the skeleton re-renders from the server's response, never from an
 * optimistic local edit. Stale revisions trigger a refetch.
 *
 * Undo restores the previous plan snapshot through POST /plan, which
 * re-executes from the source parts and therefore reproduces the earlier
 * revision content exactly (inverse ops are recorded for the history view,
 * but a float round trip through Rotate(-theta) is not byte-exact).
 */

import { ComposerApi } from "./api.js";
import { inverseOp, validateOp } from "./ops.js";
import type {
  ClassifyEntryJson,
  ComposeResultJson,
  EditOpJson,
  PlanJson,
  PreviewJson,
} from "./types.js";

export interface HistoryEntry {
  plan: PlanJson;
  revision: number;
  /** The op that led away from this snapshot, and its inverse, for display. */
  applied?: EditOpJson;
  inverse?: EditOpJson;
}

export interface ViewState {
  sessionId: string | null;
  assets: ClassifyEntryJson[];
  plan: PlanJson | null;
  preview: PreviewJson | null;
  selectedRegion: string | null;
  lastPreviewRevision: number;
  pendingProblems: string[];
}

export class SessionController {
  readonly state: ViewState = {
    sessionId: null,
    assets: [],
    plan: null,
    preview: null,
    selectedRegion: null,
    lastPreviewRevision: -1,
    pendingProblems: [],
  };

  private undoStack: HistoryEntry[] = [];
  private redoStack: HistoryEntry[] = [];

  constructor(readonly api: ComposerApi) {}

  async open(): Promise<void> {
    this.state.sessionId = await this.api.createSession();
  }

  private get sid(): string {
    if (!this.state.sessionId) {
      throw new Error("no open session");
    }
    return this.state.sessionId;
  }

  async loadFixtures(names: string[]): Promise<void> {
    for (const name of names) {
      await this.api.addFixture(this.sid, name);
    }
    const out = await this.api.classify(this.sid);
    this.state.assets = out.assets;
  }

  /** Region refs with color keys for the part list ("a0/leg/2", ...). */
  regionRefs(): string[] {
    const refs: string[] = [];
    for (const entry of this.state.assets) {
      for (const region of entry.partition.regions) {
        refs.push(`${entry.asset}/${region.label.toLowerCase()}/${region.instance}`);
      }
    }
    return refs;
  }

  select(ref: string | null): void {
    this.state.selectedRegion = ref;
  }

  async plan(request: string): Promise<void> {
    const out = await this.api.planRequest(this.sid, request);
    this.state.plan = out.plan;
    this.undoStack = [];
    this.redoStack = [];
    await this.refreshPreview();
  }

  async refreshPreview(): Promise<void> {
    const preview = await this.api.preview(this.sid);
    if (preview.revision < this.state.lastPreviewRevision) {
      // stale snapshot from an interleaved read: fetch again, never merge
      this.state.preview = await this.api.preview(this.sid);
    } else {
      this.state.preview = preview;
    }
    this.state.lastPreviewRevision = this.state.preview.revision;
  }

  /** Validate locally, submit, push the prior plan onto the undo stack. */
  async applyOp(op: EditOpJson): Promise<boolean> {
    const problems = validateOp(op);
    this.state.pendingProblems = problems;
    if (problems.length > 0) {
      return false;
    }
    if (!this.state.plan) {
      this.state.pendingProblems = ["no plan yet; run a request first"];
      return false;
    }
    const snapshot: HistoryEntry = {
      plan: this.state.plan,
      revision: this.state.lastPreviewRevision,
      applied: op,
      inverse: inverseOp(op),
    };
    await this.api.applyOp(this.sid, op);
    this.undoStack.push(snapshot);
    this.redoStack = [];
    this.state.plan = { ...this.state.plan, ops: [...this.state.plan.ops, op] };
    await this.refreshPreview();
    return true;
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  async undo(): Promise<void> {
    const entry = this.undoStack.pop();
    if (!entry || !this.state.plan) {
      return;
    }
    this.redoStack.push({ plan: this.state.plan, revision: this.state.lastPreviewRevision });
    const out = await this.api.planExplicit(this.sid, entry.plan);
    this.state.plan = out.plan;
    await this.refreshPreview();
  }

  async redo(): Promise<void> {
    const entry = this.redoStack.pop();
    if (!entry || !this.state.plan) {
      return;
    }
    this.undoStack.push({ plan: this.state.plan, revision: this.state.lastPreviewRevision });
    const out = await this.api.planExplicit(this.sid, entry.plan);
    this.state.plan = out.plan;
    await this.refreshPreview();
  }

  history(): HistoryEntry[] {
    return [...this.undoStack];
  }

  compose(): Promise<ComposeResultJson> {
    return this.api.compose(this.sid);
  }

  style(prompt: string): Promise<{ artifact: string; href: string }> {
    return this.api.style(this.sid, prompt);
  }
}
