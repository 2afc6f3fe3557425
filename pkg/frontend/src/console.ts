// Operator console core: slider state, debounced reenact requests with a
// stale-response guard, the decoupling sweep panel, and the audio timeline.

import { ApiClient, ReenactRequest, ReenactResponse, ServiceConfig, SweepResponse } from "./api.js";
import { debounce, Debounced } from "./debounce.js";
import { decodeWav, pcmToBase64, windowForFrame } from "./wav.js";

export type SliderName = "yaw" | "pitch" | "roll" | "blink_left" | "blink_right";

export interface SliderSpec {
  base: [number, number]; // training range; outside it the control turns amber
  hard: [number, number]; // clamp bounds (2x extended soft range)
  initial: number;
}

export interface ConsoleOptions {
  debounceMs?: number;
}

const DEFAULT_DEBOUNCE_MS = 80;

export function sliderSpecs(config: ServiceConfig): Record<SliderName, SliderSpec> {
  const extended = ([lo, hi]: [number, number]): [number, number] => {
    const mid = (lo + hi) / 2;
    const half = (hi - lo) / 2;
    return [mid - 2 * half, mid + 2 * half];
  };
  const pose = config.pose_ranges;
  return {
    yaw: { base: pose.yaw, hard: extended(pose.yaw), initial: 0 },
    pitch: { base: pose.pitch, hard: extended(pose.pitch), initial: 0 },
    roll: { base: pose.roll, hard: extended(pose.roll), initial: 0 },
    blink_left: { base: [0, 1], hard: [0, 1], initial: 0.4 },
    blink_right: { base: [0, 1], hard: [0, 1], initial: 0.4 },
  };
}

export const clamp = (value: number, lo: number, hi: number) =>
  Math.min(Math.max(value, lo), hi);

export class Console {
  state = {
    identity: "",
    sliders: {} as Record<SliderName, number>,
    overlay: true,
    cursorFrame: 0,
    playing: false,
  };
  config!: ServiceConfig;
  specs!: Record<SliderName, SliderSpec>;
  audio: { samples: Float32Array; sampleRate: number } | null = null;
  lastResponse: ReenactResponse | null = null;
  lastSweep: SweepResponse | null = null;
  requestCount = 0;

  private seq = 0;
  private displayedSeq = 0;
  private inFlight = new Set<string>();
  private queued = new Map<string, ReenactRequest>();
  private scheduleReenact!: Debounced<[]>;
  private playTimer: ReturnType<typeof setInterval> | null = null;
  private els: Record<string, HTMLElement> = {};

  constructor(private root: HTMLElement, private api: ApiClient,
              private options: ConsoleOptions = {}) {}

  async init(): Promise<void> {
    try {
      this.config = await this.api.config();
    } catch (err) {
      this.renderBanner("service unreachable - start `apbface serve` and reload");
      throw err;
    }
    this.specs = sliderSpecs(this.config);
    for (const name of Object.keys(this.specs) as SliderName[]) {
      this.state.sliders[name] = this.specs[name].initial;
    }
    this.state.identity = this.config.identities[0] ?? "";
    this.scheduleReenact = debounce(() => {
      void this.issue(this.currentRequest(), "sliders");
    }, this.options.debounceMs ?? DEFAULT_DEBOUNCE_MS);
    this.buildDom();
    this.scheduleReenact();
  }

  // -- request plumbing -----------------------------------------------------

  currentRequest(): ReenactRequest {
    const s = this.state.sliders;
    const body: ReenactRequest = {
      identity: this.state.identity,
      pose: { yaw: s.yaw, pitch: s.pitch, roll: s.roll },
      blink: { left: s.blink_left, right: s.blink_right },
      want_landmarks: true,
    };
    const feature = this.config.feature_config;
    if (this.audio) {
      const length = Math.round(feature.window_seconds * this.audio.sampleRate);
      const window = windowForFrame(this.audio.samples, this.audio.sampleRate,
                                    this.state.cursorFrame, feature.fps, length);
      body.audio_pcm_b64 = pcmToBase64(window);
      body.sample_rate = this.audio.sampleRate;
    } else {
      body.audio_pcm_b64 = pcmToBase64(
        new Float32Array(Math.round(feature.window_seconds * feature.sample_rate)));
      body.sample_rate = feature.sample_rate;
    }
    return body;
  }

  /** Issue a reenact request; one in flight per surface, newest response wins. */
  async issue(body: ReenactRequest, surface: string): Promise<void> {
    if (this.inFlight.has(surface)) {
      this.queued.set(surface, body);
      return;
    }
    this.inFlight.add(surface);
    const seq = ++this.seq;
    this.requestCount += 1;
    try {
      const response = await this.api.reenact(body);
      if (seq > this.displayedSeq) {
        this.displayedSeq = seq;
        this.lastResponse = response;
        this.renderResponse(response);
      }
    } catch (err) {
      this.toast(err instanceof Error ? err.message : String(err));
    } finally {
      this.inFlight.delete(surface);
      const queued = this.queued.get(surface);
      if (queued) {
        this.queued.delete(surface);
        void this.issue(queued, surface);
      }
    }
  }

  // -- control surfaces -----------------------------------------------------

  setSlider(name: SliderName, rawValue: number): void {
    const spec = this.specs[name];
    const value = clamp(rawValue, spec.hard[0], spec.hard[1]);
    this.state.sliders[name] = value;
    this.syncSliderDom(name);
    this.scheduleReenact();
  }

  setIdentity(identity: string): void {
    this.state.identity = identity;
    this.scheduleReenact();
  }

  setOverlay(visible: boolean): void {
    this.state.overlay = visible;
    const overlay = this.els.overlay as HTMLImageElement | undefined;
    if (overlay) overlay.style.display = visible ? "block" : "none";
    // display-only: no request
  }

  async runSweep(variable: "yaw" | "pitch" | "roll" | "blink", lo: number, hi: number,
                 steps: number): Promise<SweepResponse> {
    const response = await this.api.sweep({
      variable, range: [lo, hi], steps, base: this.currentRequest(),
    });
    this.lastSweep = response;
    this.renderFilmstrip(response);
    return response;
  }

  loadAudioBuffer(buffer: ArrayBuffer): void {
    const decoded = decodeWav(buffer);
    this.audio = { samples: decoded.samples, sampleRate: decoded.sampleRate };
    this.state.cursorFrame = 0;
    const cursor = this.els.cursor as HTMLInputElement | undefined;
    if (cursor) {
      const frames = Math.floor(
        (decoded.samples.length / decoded.sampleRate) * this.config.feature_config.fps);
      cursor.max = String(Math.max(frames - 1, 0));
      cursor.value = "0";
    }
  }

  setCursor(frame: number): void {
    this.state.cursorFrame = Math.max(0, Math.round(frame));
    void this.issue(this.currentRequest(), "timeline");
  }

  play(): void {
    if (this.playTimer !== null) return;
    this.state.playing = true;
    const interval = 1000 / this.config.feature_config.fps;
    this.playTimer = setInterval(() => {
      this.setCursor(this.state.cursorFrame + 1);
      const cursor = this.els.cursor as HTMLInputElement | undefined;
      if (cursor) cursor.value = String(this.state.cursorFrame);
    }, interval);
  }

  pause(): void {
    if (this.playTimer !== null) clearInterval(this.playTimer);
    this.playTimer = null;
    this.state.playing = false;
  }

  /** Data URLs of the sweep frames, left to right (what the export draws). */
  exportGridSources(): string[] {
    if (!this.lastSweep) return [];
    return this.lastSweep.frames.map((f) => `data:image/png;base64,${f.face_png_b64}`);
  }

  exportGrid(): string[] {
    const sources = this.exportGridSources();
    const doc = this.root.ownerDocument;
    const canvas = doc.createElement("canvas");
    const size = this.config.resolution;
    canvas.width = size * Math.max(sources.length, 1);
    canvas.height = size;
    const ctx = canvas.getContext?.("2d");
    if (ctx) {
      sources.forEach((src, i) => {
        const img = doc.createElement("img") as HTMLImageElement;
        img.src = src;
        try {
          ctx.drawImage(img, i * size, 0, size, size);
        } catch {
          // headless environments cannot rasterize; sources are still returned
        }
      });
    }
    return sources;
  }

  // -- DOM ------------------------------------------------------------------

  private buildDom(): void {
    const doc = this.root.ownerDocument;
    this.root.innerHTML = "";

    const banner = doc.createElement("div");
    banner.className = "banner";
    banner.style.display = "none";
    this.els.banner = banner;
    this.root.appendChild(banner);

    const toasts = doc.createElement("div");
    toasts.className = "toasts";
    this.els.toasts = toasts;
    this.root.appendChild(toasts);

    const controls = doc.createElement("div");
    controls.className = "controls";
    const identity = doc.createElement("select");
    identity.className = "identity";
    for (const name of this.config.identities) {
      const option = doc.createElement("option");
      option.value = name;
      option.textContent = name;
      identity.appendChild(option);
    }
    identity.addEventListener("change", () => this.setIdentity(identity.value));
    controls.appendChild(identity);

    for (const name of Object.keys(this.specs) as SliderName[]) {
      const spec = this.specs[name];
      const row = doc.createElement("label");
      row.className = `slider-row slider-${name}`;
      row.textContent = name.replace("_", " ");
      const range = doc.createElement("input");
      range.type = "range";
      range.min = String(spec.hard[0]);
      range.max = String(spec.hard[1]);
      range.step = "0.001";
      range.value = String(this.state.sliders[name]);
      range.className = "slider";
      range.addEventListener("input", () => this.setSlider(name, Number(range.value)));
      const number = doc.createElement("input");
      number.type = "number";
      number.step = "0.01";
      number.value = String(this.state.sliders[name]);
      number.className = "slider-number";
      number.addEventListener("change", () => this.setSlider(name, Number(number.value)));
      row.appendChild(range);
      row.appendChild(number);
      controls.appendChild(row);
      this.els[`slider_${name}`] = range;
      this.els[`number_${name}`] = number;
      this.els[`row_${name}`] = row;
    }
    this.root.appendChild(controls);

    const viewer = doc.createElement("div");
    viewer.className = "viewer";
    const face = doc.createElement("img");
    face.className = "face";
    const overlay = doc.createElement("img");
    overlay.className = "overlay";
    viewer.appendChild(face);
    viewer.appendChild(overlay);
    const overlayToggle = doc.createElement("input");
    overlayToggle.type = "checkbox";
    overlayToggle.checked = true;
    overlayToggle.className = "overlay-toggle";
    overlayToggle.addEventListener("change", () => this.setOverlay(overlayToggle.checked));
    viewer.appendChild(overlayToggle);
    const latency = doc.createElement("div");
    latency.className = "latency";
    viewer.appendChild(latency);
    this.root.appendChild(viewer);
    this.els.face = face;
    this.els.overlay = overlay;
    this.els.latency = latency;

    const sweep = doc.createElement("div");
    sweep.className = "sweep-panel";
    const variable = doc.createElement("select");
    variable.className = "sweep-variable";
    for (const name of ["yaw", "pitch", "roll", "blink"]) {
      const option = doc.createElement("option");
      option.value = name;
      option.textContent = name;
      variable.appendChild(option);
    }
    const lo = doc.createElement("input");
    lo.type = "number";
    lo.value = "-0.3";
    lo.className = "sweep-lo";
    const hi = doc.createElement("input");
    hi.type = "number";
    hi.value = "0.15";
    hi.className = "sweep-hi";
    const steps = doc.createElement("input");
    steps.type = "number";
    steps.value = "5";
    steps.className = "sweep-steps";
    const run = doc.createElement("button");
    run.textContent = "run sweep";
    run.className = "sweep-run";
    run.addEventListener("click", () => {
      void this.runSweep(variable.value as "yaw" | "pitch" | "roll" | "blink",
                         Number(lo.value), Number(hi.value), Number(steps.value));
    });
    const strip = doc.createElement("div");
    strip.className = "filmstrip";
    const scrubber = doc.createElement("input");
    scrubber.type = "range";
    scrubber.min = "0";
    scrubber.max = "0";
    scrubber.step = "1";
    scrubber.className = "scrubber";
    scrubber.addEventListener("input", () => {
      const frame = this.lastSweep?.frames[Number(scrubber.value)];
      if (frame) this.renderResponse(frame);
    });
    const exportButton = doc.createElement("button");
    exportButton.textContent = "export grid";
    exportButton.className = "sweep-export";
    exportButton.addEventListener("click", () => this.exportGrid());
    sweep.append(variable, lo, hi, steps, run, strip, scrubber, exportButton);
    this.root.appendChild(sweep);
    this.els.filmstrip = strip;
    this.els.scrubber = scrubber;

    const audio = doc.createElement("div");
    audio.className = "audio-panel";
    const file = doc.createElement("input");
    file.type = "file";
    file.accept = "audio/wav";
    file.className = "audio-file";
    file.addEventListener("change", async () => {
      const picked = (file as HTMLInputElement).files?.[0];
      if (picked) this.loadAudioBuffer(await picked.arrayBuffer());
    });
    const cursor = doc.createElement("input");
    cursor.type = "range";
    cursor.min = "0";
    cursor.max = "0";
    cursor.step = "1";
    cursor.className = "cursor";
    cursor.addEventListener("input", () => this.setCursor(Number(cursor.value)));
    const playButton = doc.createElement("button");
    playButton.textContent = "play";
    playButton.className = "play";
    playButton.addEventListener("click", () => {
      if (this.state.playing) {
        this.pause();
        playButton.textContent = "play";
      } else {
        this.play();
        playButton.textContent = "pause";
      }
    });
    audio.append(file, cursor, playButton);
    this.root.appendChild(audio);
    this.els.cursor = cursor;
  }

  private syncSliderDom(name: SliderName): void {
    const value = this.state.sliders[name];
    const spec = this.specs[name];
    const range = this.els[`slider_${name}`] as HTMLInputElement | undefined;
    const number = this.els[`number_${name}`] as HTMLInputElement | undefined;
    const row = this.els[`row_${name}`];
    if (range) range.value = String(value);
    if (number) number.value = String(value);
    if (row) {
      const outside = value < spec.base[0] || value > spec.base[1];
      row.classList.toggle("amber", outside);
    }
  }

  private renderResponse(response: ReenactResponse): void {
    const face = this.els.face as HTMLImageElement | undefined;
    if (face) face.src = `data:image/png;base64,${response.face_png_b64}`;
    const overlay = this.els.overlay as HTMLImageElement | undefined;
    if (overlay && response.landmark_png_b64) {
      overlay.src = `data:image/png;base64,${response.landmark_png_b64}`;
      overlay.style.display = this.state.overlay ? "block" : "none";
    }
    if (this.els.latency) {
      const ms = response.latency_ms;
      this.els.latency.textContent =
        `predict ${ms.predict.toFixed(1)}ms / render ${ms.render.toFixed(1)}ms / ` +
        `reenact ${ms.reenact.toFixed(1)}ms / total ${ms.total.toFixed(1)}ms`;
    }
  }

  private renderFilmstrip(sweep: SweepResponse): void {
    const strip = this.els.filmstrip;
    const scrubber = this.els.scrubber as HTMLInputElement | undefined;
    if (!strip) return;
    strip.innerHTML = "";
    const doc = this.root.ownerDocument;
    sweep.frames.forEach((frame, i) => {
      const thumb = doc.createElement("img");
      thumb.className = "thumb";
      thumb.src = `data:image/png;base64,${frame.face_png_b64}`;
      thumb.title = `${sweep.variable}=${sweep.values[i].toFixed(3)}`;
      thumb.addEventListener("click", () => this.renderResponse(frame));
      strip.appendChild(thumb);
    });
    if (scrubber) scrubber.max = String(Math.max(sweep.frames.length - 1, 0));
  }

  private renderBanner(message: string): void {
    let banner = this.els.banner;
    if (!banner) {
      banner = this.root.ownerDocument.createElement("div");
      banner.className = "banner";
      this.root.appendChild(banner);
      this.els.banner = banner;
    }
    banner.textContent = message;
    banner.style.display = "block";
  }

  toast(message: string): void {
    const doc = this.root.ownerDocument;
    let host = this.els.toasts;
    if (!host) {
      host = doc.createElement("div");
      host.className = "toasts";
      this.root.appendChild(host);
      this.els.toasts = host;
    }
    const toast = doc.createElement("div");
    toast.className = "toast";
    toast.textContent = message;
    host.appendChild(toast);
    setTimeout(() => toast.remove(), 4000);
  }
}
