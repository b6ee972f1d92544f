// DOM wiring for the review queue. All state lives in ReviewQueue; this
// file only renders it and forwards user actions. Buttons and keyboard
// shortcuts go through the same decide() path.

import { TriageApi } from './api.js';
import { ReviewItem, ReviewQueue } from './queue.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function escapeHtml(text: string): string {
  const div = document.createElement('div');
  div.textContent = text;
  return div.innerHTML;
}

function fmtScore(score: number): string {
  return score.toFixed(3);
}

function rowHtml(item: ReviewItem, selected: boolean): string {
  const classes = ['row'];
  if (selected) classes.push('selected');
  if (item.decision !== 'undecided') classes.push('decided');
  const badge =
    item.decision === 'undecided'
      ? ''
      : `<span class="badge ${item.decision}">${item.decision}</span>`;
  const error = item.error
    ? `<span class="row-error" title="${escapeHtml(item.error)}">!</span>`
    : '';
  return `
    <li class="${classes.join(' ')}" data-hash="${escapeHtml(item.hash)}">
      <span class="rank">${item.rank}</span>
      <span class="score">${fmtScore(item.score)}</span>
      <span class="path">${escapeHtml(item.path)}</span>
      ${badge}${error}
    </li>`;
}

function detailHtml(item: ReviewItem | null): string {
  if (!item) {
    return '<p class="hint">Select an artifact to inspect it.</p>';
  }
  const events = item.events;
  const eventBlock = events
    ? `
      <h3>Recorded events</h3>
      <dl>
        <dt>count</dt><dd>${events.total_count}</dd>
        <dt>top type</dt><dd>${escapeHtml(events.top_type ?? '-')}</dd>
        <dt>top source</dt><dd>${escapeHtml(events.top_source ?? '-')}</dd>
        <dt>first</dt><dd>${escapeHtml(events.first_event ?? '-')}</dd>
        <dt>last</dt><dd>${escapeHtml(events.last_event ?? '-')}</dd>
      </dl>`
    : '<h3>Recorded events</h3><p class="hint">No events attached.</p>';
  return `
    <dl>
      <dt>path</dt><dd class="mono">${escapeHtml(item.path)}</dd>
      <dt>hash</dt><dd class="mono">${escapeHtml(item.hash)}</dd>
      <dt>source</dt><dd>${escapeHtml(item.sourceId)} / inode ${item.inode ?? '-'}</dd>
      <dt>score</dt><dd>${fmtScore(item.score)}</dd>
      <dt>predicted</dt><dd>${item.predicted === 1 ? 'suspicious' : 'benign'}</dd>
      <dt>decision</dt><dd>${item.decision}</dd>
    </dl>
    ${eventBlock}
    ${item.error ? `<p class="inline-error">${escapeHtml(item.error)}</p>` : ''}`;
}

export function startApp(): void {
  const params = new URLSearchParams(window.location.search);
  const baseInput = el<HTMLInputElement>('base-url');
  const caseInput = el<HTMLInputElement>('case-id');
  baseInput.value = params.get('base') ?? 'http://localhost:8000';
  caseInput.value = params.get('case') ?? 'case-0001';

  let queue = new ReviewQueue(new TriageApi(baseInput.value), render);

  function render(): void {
    const banner = el('banner');
    banner.textContent = queue.banner ?? '';
    banner.style.display = queue.banner ? 'block' : 'none';

    const status = el('status');
    if (queue.phase === 'loading') status.textContent = 'loading…';
    else if (queue.phase === 'retraining') status.textContent = 'retraining…';
    else if (queue.phase === 'untrained')
      status.textContent =
        'This case has not been trained yet: press retrain on the server ' +
        '(POST /v1/cases/{id}/retrain) or use the button once labels exist.';
    else status.textContent = '';

    const progress = queue.progress();
    el('progress').textContent =
      `${progress.reviewed} / ${progress.total} reviewed`;

    const visible = queue.visibleItems();
    const list = el('queue');
    if (queue.phase === 'ready' && visible.length === 0) {
      list.innerHTML = '<li class="hint">Nothing to review.</li>';
    } else {
      list.innerHTML = visible
        .map((item) => rowHtml(item, item.hash === queue.selectedHash))
        .join('');
    }

    el('detail').innerHTML = detailHtml(queue.selected());

    const busy = queue.phase !== 'ready';
    el<HTMLButtonElement>('btn-benign').disabled =
      busy || queue.selected()?.decision !== 'undecided';
    el<HTMLButtonElement>('btn-illegal').disabled =
      busy || queue.selected()?.decision !== 'undecided';
    const retrain = el<HTMLButtonElement>('btn-retrain');
    retrain.disabled = !queue.canRetrain();
    retrain.textContent = queue.decidedSinceRetrain > 0
      ? `Retrain (${queue.decidedSinceRetrain} new)`
      : 'Retrain';
  }

  function reload(): void {
    queue = new ReviewQueue(new TriageApi(baseInput.value), render);
    void queue.load(caseInput.value.trim());
  }

  el('btn-load').addEventListener('click', reload);

  el('queue').addEventListener('click', (event) => {
    const row = (event.target as HTMLElement).closest('[data-hash]');
    if (row) queue.select((row as HTMLElement).dataset.hash ?? '');
  });

  const act = (decision: 'benign' | 'illegal'): void => {
    const item = queue.selected();
    if (item) void queue.decide(item.hash, decision);
  };
  el('btn-benign').addEventListener('click', () => act('benign'));
  el('btn-illegal').addEventListener('click', () => act('illegal'));
  el('btn-retrain').addEventListener('click', () => void queue.retrain());

  document.addEventListener('keydown', (event) => {
    const target = event.target as HTMLElement;
    if (target.tagName === 'INPUT' || target.tagName === 'TEXTAREA') return;
    if (event.key === 'b') act('benign');
    if (event.key === 'i') act('illegal');
  });

  el<HTMLInputElement>('filter-score').addEventListener('input', (event) => {
    const raw = (event.target as HTMLInputElement).value;
    queue.setFilter({ scoreFloor: raw === '' ? null : Number(raw) });
  });
  el<HTMLInputElement>('filter-ext').addEventListener('input', (event) => {
    queue.setFilter({ extension: (event.target as HTMLInputElement).value || null });
  });
  el<HTMLInputElement>('filter-prefix').addEventListener('input', (event) => {
    queue.setFilter({ dirPrefix: (event.target as HTMLInputElement).value || null });
  });

  reload();
}

startApp();
