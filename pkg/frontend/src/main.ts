/**
 * Browser entry point: wires the click panel, playback loop, and session
 * driver together. All session logic lives in session.ts; this file only
 * touches the DOM.
 *
 * The session id is kept in localStorage so a reload resumes the current
 * round instead of starting over.
 */

import { ServiceClient } from './api.js';
import { PlaybackLoop, webAudioPlayer } from './playback.js';
import { anglesToPanel, panelToAngles } from './projection.js';
import { SessionDriver, etaSeries, isNonincreasing } from './session.js';

const SESSION_KEY = 'hrtfgp.session_id';
const DEFAULT_PLAN = {
  targets: [
    { azimuth: 0.9, elevation: 0.2 },
    { azimuth: -1.4, elevation: -0.1 },
  ],
  roundsPerTarget: 10,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string): void {
  el<HTMLElement>('status').textContent = text;
}

function drawPanel(canvas: HTMLCanvasElement): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.fillStyle = '#10243a';
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = '#3a5a7a';
  for (const frac of [0.25, 0.5, 0.75]) {
    ctx.beginPath();
    ctx.moveTo(canvas.width * frac, 0);
    ctx.lineTo(canvas.width * frac, canvas.height);
    ctx.moveTo(0, canvas.height * frac);
    ctx.lineTo(canvas.width, canvas.height * frac);
    ctx.stroke();
  }
}

function drawSummary(canvas: HTMLCanvasElement, driver: SessionDriver): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.fillStyle = '#0a0a0a';
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const series = etaSeries(driver.etaTrace(), driver.snapshot.target_plan.length);
  const colors = ['#e0b040', '#40c0e0', '#e06080', '#80e040'];
  series.forEach((values, u) => {
    if (!isNonincreasing(values.filter((v) => !Number.isNaN(v)))) {
      // a running minimum can never rise; if this fires the service is broken
      console.error(`eta trace for target ${u} is not nonincreasing`);
    }
    ctx.strokeStyle = colors[u % colors.length];
    ctx.beginPath();
    values.forEach((v, t) => {
      const x = (t / Math.max(values.length - 1, 1)) * canvas.width;
      const y = ((v + 1) / 2) * canvas.height; // eta in [-1, 1]
      if (t === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  });
}

async function runRound(
  client: ServiceClient,
  driver: SessionDriver,
  panel: HTMLCanvasElement,
  loop: { current: PlaybackLoop | null },
): Promise<void> {
  const query = await driver.currentQuery();
  setStatus(
    `round ${query.round + 1} / ${driver.totalRounds} — ` +
      `target ${query.target_index + 1}: listen, then click where you hear it`,
  );
  let render: ArrayBuffer;
  let noise: ArrayBuffer;
  try {
    render = await client.fetchAudio(query.wav);
    noise = await client.fetchAudio(query.alternates);
  } catch (err) {
    setStatus(`audio fetch failed (${err}); retrying in 2 s`);
    setTimeout(() => void runRound(client, driver, panel, loop), 2000);
    return;
  }
  const audioCtx = new AudioContext();
  const playback = new PlaybackLoop(webAudioPlayer(audioCtx));
  loop.current = playback;
  void playback.run(render, noise);
}

export async function boot(): Promise<void> {
  const client = new ServiceClient('');
  const panel = el<HTMLCanvasElement>('panel');
  const summary = el<HTMLCanvasElement>('summary');
  drawPanel(panel);

  let driver: SessionDriver;
  const stored = localStorage.getItem(SESSION_KEY);
  if (stored) {
    driver = await SessionDriver.resume(client, stored);
  } else {
    driver = await SessionDriver.start(
      client,
      DEFAULT_PLAN.targets,
      DEFAULT_PLAN.roundsPerTarget,
    );
    localStorage.setItem(SESSION_KEY, driver.sessionId);
  }

  const loop: { current: PlaybackLoop | null } = { current: null };

  const finish = (): void => {
    setStatus('session complete');
    drawSummary(summary, driver);
    driver.snapshot.best_per_target.forEach((best, u) => {
      if (!best) return;
      // direction vectors are [left-right, front-back, up]
      const { x, y } = anglesToPanel(
        { azimuth: Math.atan2(best.v[0], best.v[1]), elevation: Math.asin(best.v[2]) },
        panel.width,
        panel.height,
      );
      const ctx = panel.getContext('2d');
      ctx?.fillRect(x - 3, y - 3, 6, 6);
      void u;
    });
    localStorage.removeItem(SESSION_KEY);
  };

  panel.addEventListener('click', (ev: MouseEvent) => {
    const rect = panel.getBoundingClientRect();
    const angles = panelToAngles(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      rect.width,
      rect.height,
    );
    if (!angles || driver.complete) return; // outside the panel: ignored
    loop.current?.stop();
    void driver.report(angles.azimuth, angles.elevation).then(() => {
      if (driver.complete) finish();
      else void runRound(client, driver, panel, loop);
    });
  });

  if (driver.complete) finish();
  else await runRound(client, driver, panel, loop);
}

if (typeof document !== 'undefined' && document.getElementById('panel')) {
  void boot();
}
