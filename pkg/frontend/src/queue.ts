// Review queue state machine. Pure client logic: items arrive ranked by
// the service and are never re-scored or re-ordered here; filters only
// hide rows. All rendering hangs off the notify callback.

import { ApiError, Decision, Prediction, TriageApi } from './api.js';

export type ItemDecision = 'undecided' | Decision;

export interface ReviewItem {
  rank: number;
  sourceId: string;
  inode: number | null;
  path: string;
  hash: string;
  score: number;
  predicted: number;
  events: Prediction['events'];
  decision: ItemDecision;
  error: string | null;
}

export interface QueueFilter {
  scoreFloor: number | null;
  extension: string | null;
  dirPrefix: string | null;
}

export const IDENTITY_FILTER: QueueFilter = {
  scoreFloor: null,
  extension: null,
  dirPrefix: null,
};

export type QueuePhase =
  | 'idle'
  | 'loading'
  | 'ready'
  | 'untrained'
  | 'retraining'
  | 'error';

export function extensionOf(path: string): string {
  const name = path.split('/').pop() ?? '';
  const dot = name.lastIndexOf('.');
  if (dot <= 0 || dot === name.length - 1) return '';
  return name.slice(dot + 1).toLowerCase();
}

function toItem(prediction: Prediction): ReviewItem {
  return {
    rank: prediction.rank,
    sourceId: prediction.source_id,
    inode: prediction.inode,
    path: prediction.path,
    hash: prediction.hash,
    score: prediction.score,
    predicted: prediction.predicted,
    events: prediction.events,
    decision: 'undecided',
    error: null,
  };
}

export class ReviewQueue {
  caseId = '';
  version = 0;
  phase: QueuePhase = 'idle';
  /** Top-of-page banner for whole-queue failures; null when healthy. */
  banner: string | null = null;
  items: ReviewItem[] = [];
  filter: QueueFilter = { ...IDENTITY_FILTER };
  selectedHash: string | null = null;
  decidedSinceRetrain = 0;

  private inFlight = new Set<string>();

  constructor(
    private readonly api: TriageApi,
    private readonly notify: () => void = () => {},
  ) {}

  async load(caseId: string): Promise<void> {
    this.caseId = caseId;
    this.phase = 'loading';
    this.banner = null;
    this.notify();
    try {
      const page = await this.api.getPredictions(caseId);
      this.items = page.predictions.map(toItem);
      this.version = page.version;
      this.decidedSinceRetrain = 0;
      this.selectedHash = this.items[0]?.hash ?? null;
      this.phase = 'ready';
    } catch (err) {
      this.items = [];
      this.selectedHash = null;
      if (err instanceof ApiError && err.code === 'not-trained') {
        this.phase = 'untrained';
      } else {
        this.phase = 'error';
        this.banner = err instanceof Error ? err.message : String(err);
      }
    }
    this.notify();
  }

  setFilter(patch: Partial<QueueFilter>): void {
    this.filter = { ...this.filter, ...patch };
    this.notify();
  }

  /** Items passing the filter, in unchanged service order. */
  visibleItems(): ReviewItem[] {
    const { scoreFloor, extension, dirPrefix } = this.filter;
    return this.items.filter((item) => {
      if (scoreFloor !== null && item.score < scoreFloor) return false;
      if (extension !== null && extension !== '' &&
          extensionOf(item.path) !== extension.toLowerCase()) return false;
      if (dirPrefix !== null && dirPrefix !== '' &&
          !item.path.startsWith(dirPrefix)) return false;
      return true;
    });
  }

  progress(): { reviewed: number; total: number } {
    const reviewed = this.items.filter((i) => i.decision !== 'undecided').length;
    return { reviewed, total: this.items.length };
  }

  select(hash: string): void {
    if (this.items.some((i) => i.hash === hash)) {
      this.selectedHash = hash;
      this.notify();
    }
  }

  selected(): ReviewItem | null {
    return this.items.find((i) => i.hash === this.selectedHash) ?? null;
  }

  /**
   * Record one investigator decision. Optimistic: the item flips
   * immediately and is rolled back to undecided when the service
   * rejects it. At most one submission is in flight per item, and
   * nothing is accepted mid-retrain.
   */
  async decide(hash: string, decision: Decision): Promise<void> {
    if (this.phase !== 'ready') return;
    const item = this.items.find((i) => i.hash === hash);
    if (!item || item.decision !== 'undecided') return;
    if (this.inFlight.has(hash)) return;

    this.inFlight.add(hash);
    item.decision = decision;
    item.error = null;
    this.notify();
    try {
      await this.api.submitLabel(this.caseId, hash, decision);
      this.decidedSinceRetrain += 1;
      if (this.selectedHash === hash) this.advanceFrom(hash);
    } catch (err) {
      item.decision = 'undecided';
      item.error = err instanceof Error ? err.message : String(err);
    } finally {
      this.inFlight.delete(hash);
      this.notify();
    }
  }

  private advanceFrom(hash: string): void {
    const visible = this.visibleItems();
    const at = visible.findIndex((i) => i.hash === hash);
    const after = visible.slice(at + 1).concat(visible.slice(0, at));
    const next = after.find((i) => i.decision === 'undecided');
    this.selectedHash = next ? next.hash : null;
  }

  canRetrain(): boolean {
    return this.phase === 'ready' && this.decidedSinceRetrain > 0;
  }

  /** Retrain on the server, then reload the (shrunken) ranking. */
  async retrain(): Promise<void> {
    if (!this.canRetrain()) return;
    this.phase = 'retraining';
    this.banner = null;
    this.notify();
    try {
      await this.api.retrain(this.caseId);
    } catch (err) {
      this.phase = 'ready';
      if (err instanceof ApiError && err.code === 'degenerate-class') {
        this.banner =
          'Retraining needs confirmed artifacts of both classes. ' + err.message;
      } else {
        this.banner = err instanceof Error ? err.message : String(err);
      }
      this.notify();
      return;
    }
    await this.load(this.caseId);
  }
}
