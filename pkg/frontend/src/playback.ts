/**
 * Alternating playback: spatialized burst, 300 ms gap, dry reference
 * burst, 300 ms gap, again — until the listener reports a direction.
 *
 * The audio backend is injected so the loop is testable without a real
 * AudioContext; `webAudioPlayer` adapts the browser implementation.
 */

export const GAP_MS = 300;

export interface AudioPlayer {
  /** Resolve when the clip has finished playing. */
  play(clip: ArrayBuffer): Promise<void>;
  /** Cut playback immediately. */
  stop(): void;
}

export type PlaybackEvent = 'render' | 'noise';

export class PlaybackLoop {
  private running = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private wake: (() => void) | null = null;

  constructor(
    private readonly player: AudioPlayer,
    private readonly gapMs: number = GAP_MS,
    private readonly onPlay?: (which: PlaybackEvent) => void,
  ) {}

  get active(): boolean {
    return this.running;
  }

  /** Alternate the two clips until stop() is called. */
  async run(render: ArrayBuffer, noise: ArrayBuffer): Promise<void> {
    this.running = true;
    let which: PlaybackEvent = 'render';
    while (this.running) {
      this.onPlay?.(which);
      await this.player.play(which === 'render' ? render : noise);
      if (!this.running) break;
      await this.pause(this.gapMs);
      which = which === 'render' ? 'noise' : 'render';
    }
  }

  /** Halt playback; called when a direction is posted. */
  stop(): void {
    this.running = false;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.wake?.(); // release a loop waiting out the gap
    this.wake = null;
    this.player.stop();
  }

  private pause(ms: number): Promise<void> {
    return new Promise((resolve) => {
      this.wake = resolve;
      this.timer = setTimeout(() => {
        this.timer = null;
        this.wake = null;
        resolve();
      }, ms);
    });
  }
}

/** Web Audio adapter used by the browser entry point. */
export function webAudioPlayer(ctx: AudioContext): AudioPlayer {
  let source: AudioBufferSourceNode | null = null;
  return {
    async play(clip: ArrayBuffer): Promise<void> {
      const buffer = await ctx.decodeAudioData(clip.slice(0));
      await new Promise<void>((resolve) => {
        source = ctx.createBufferSource();
        source.buffer = buffer;
        source.connect(ctx.destination);
        source.onended = () => resolve();
        source.start();
      });
    },
    stop(): void {
      source?.stop();
      source = null;
    },
  };
}
