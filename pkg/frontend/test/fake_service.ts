// In-memory stand-in for the triage service, driven through a FetchLike.
// Tracks every label request and drops confirmed hashes from the ranking
// on retrain, mirroring the real filter/train/rank contract.

import type { FetchLike, Prediction } from '../src/api.js';

export interface FakeService {
  fetchFn: FetchLike;
  labelCalls: Array<{ hash: string; decision: string }>;
  retrainCalls: number;
  state: {
    status: 'ingested' | 'ranked';
    version: number;
    predictions: Prediction[];
    labeled: Map<string, string>;
    failLabels: boolean;
    failRetrainDegenerate: boolean;
  };
}

export function prediction(rank: number, over: Partial<Prediction> = {}): Prediction {
  return {
    rank,
    source_id: 'img0',
    inode: rank,
    path: `/data/store/file${String(rank).padStart(3, '0')}.jpg`,
    hash: rank.toString(16).padStart(64, '0'),
    score: Math.round((1 - rank * 0.013) * 1e6) / 1e6,
    predicted: rank <= 10 ? 1 : 0,
    events: {
      total_count: 3,
      top_type: 'Content Modification Time',
      top_source: 'FILE',
      first_event: '2019-01-02T03:04:05Z',
      last_event: '2019-02-02T03:04:05Z',
    },
    ...over,
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export function fakeService(items: Prediction[], ranked = true): FakeService {
  const service: FakeService = {
    labelCalls: [],
    retrainCalls: 0,
    state: {
      status: ranked ? 'ranked' : 'ingested',
      version: ranked ? 1 : 0,
      predictions: items,
      labeled: new Map(),
      failLabels: false,
      failRetrainDegenerate: false,
    },
    fetchFn: async (input, init) => {
      const method = init?.method ?? 'GET';
      const url = new URL(input, 'http://service.test');
      const path = url.pathname;
      const { state } = service;

      if (method === 'GET' && /\/predictions$/.test(path)) {
        if (state.status !== 'ranked') {
          return json({ code: 'not-trained', message: 'case not retrained yet' }, 409);
        }
        let predictions = state.predictions;
        const topN = url.searchParams.get('top_n');
        if (topN !== null) predictions = predictions.slice(0, Number(topN));
        return json({
          case_id: 'case-0001',
          version: state.version,
          count: predictions.length,
          predictions,
        });
      }

      if (method === 'POST' && /\/labels$/.test(path)) {
        const body = JSON.parse(String(init?.body)) as { hash: string; decision: string };
        service.labelCalls.push({ hash: body.hash, decision: body.decision });
        if (state.failLabels) {
          return json({ code: 'not-found', message: `hash ${body.hash} is not in the case` }, 404);
        }
        const replaced = state.labeled.has(body.hash);
        state.labeled.set(body.hash, body.decision);
        return json({
          case_id: 'case-0001',
          hash: body.hash,
          decision: body.decision,
          result: replaced ? 'replaced' : 'inserted',
        });
      }

      if (method === 'POST' && /\/retrain$/.test(path)) {
        service.retrainCalls += 1;
        if (state.failRetrainDegenerate) {
          return json({ code: 'degenerate-class', message: 'training set has a single class' }, 409);
        }
        state.predictions = state.predictions
          .filter((p) => !state.labeled.has(p.hash))
          .map((p, at) => ({ ...p, rank: at + 1 }));
        state.status = 'ranked';
        state.version += 1;
        return json({
          case_id: 'case-0001',
          status: state.status,
          version: state.version,
          created_at: '2019-03-01T00:00:00Z',
          counts: {},
        });
      }

      return json({ code: 'not-found', message: `no route ${method} ${path}` }, 404);
    },
  };
  return service;
}

/** A promise with its resolve handle exposed, for in-flight tests. */
export function deferred<T>(): { promise: Promise<T>; resolve: (v: T) => void } {
  let resolve!: (v: T) => void;
  const promise = new Promise<T>((r) => {
    resolve = r;
  });
  return { promise, resolve };
}
