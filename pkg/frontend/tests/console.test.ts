import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ReenactResponse, ServiceConfig } from "../src/api.js";
import { Console, clamp, sliderSpecs } from "../src/console.js";
import { debounce } from "../src/debounce.js";
import { decodeWav, pcmToBase64, windowForFrame } from "../src/wav.js";

const CONFIG: ServiceConfig = {
  pipeline_version: "apbface/0.1.0",
  resolution: 64,
  feature_config: { sample_rate: 44100, window_seconds: 0.2, fps: 25, n_fft_frames: 16, n_mfcc: 20 },
  identities: ["ann_a", "ann_b"],
  pose_ranges: { yaw: [-0.354, 0.196], pitch: [-0.367, 0.379], roll: [-0.502, 0.509] },
};

function fakeResponse(tag: string): ReenactResponse {
  return {
    identity: "ann_a",
    landmarks: [[0.5, 0.5]],
    face_png_b64: `face-${tag}`,
    landmark_png_b64: `lm-${tag}`,
    latency_ms: { predict: 1, render: 1, reenact: 1, total: 3.5 },
  };
}

interface FakeServer {
  fetch: (url: string, init?: RequestInit) => Promise<Response>;
  reenactBodies: Array<Record<string, unknown>>;
  sweepBodies: Array<Record<string, unknown>>;
  reenactDelay: (callIndex: number) => Promise<void>;
  resolveDelayed: (callIndex: number) => void;
}

function makeServer(): FakeServer {
  const reenactBodies: Array<Record<string, unknown>> = [];
  const sweepBodies: Array<Record<string, unknown>> = [];
  const gates = new Map<number, () => void>();
  const pending = new Map<number, Promise<void>>();

  const server: FakeServer = {
    reenactBodies,
    sweepBodies,
    reenactDelay: (i) => pending.get(i) ?? Promise.resolve(),
    resolveDelayed: (i) => gates.get(i)?.(),
    fetch: async (url, init) => {
      if (url.endsWith("/v1/config")) {
        return new Response(JSON.stringify(CONFIG), { status: 200 });
      }
      if (url.endsWith("/v1/reenact")) {
        const body = JSON.parse(String(init?.body));
        const index = reenactBodies.length;
        reenactBodies.push(body);
        await pending.get(index);
        return new Response(JSON.stringify(fakeResponse(`r${index}`)), { status: 200 });
      }
      if (url.endsWith("/v1/sweep")) {
        const body = JSON.parse(String(init?.body));
        sweepBodies.push(body);
        const steps = body.steps as number;
        const values = Array.from({ length: steps }, (_, i) => i);
        return new Response(JSON.stringify({
          variable: body.variable,
          values,
          frames: values.map((v) => fakeResponse(`s${v}`)),
        }), { status: 200 });
      }
      return new Response(JSON.stringify({ detail: { code: "nope", message: "404" } }),
                          { status: 404 });
    },
  };
  // helper to register a controllable delay for a future reenact call
  (server as FakeServer & { delayCall: (i: number) => void }).delayCall = (i: number) => {
    pending.set(i, new Promise<void>((resolve) => gates.set(i, resolve)));
  };
  return server;
}

async function makeConsole(server: FakeServer, debounceMs = 80) {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const api = new ApiClient("http://svc", server.fetch);
  const console_ = new Console(root, api, { debounceMs });
  await console_.init();
  return { console_, root };
}

const flush = () => new Promise<void>((resolve) => setTimeout(resolve, 0));

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("fires once on the trailing edge", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 80);
    d(1); d(2); d(3);
    vi.advanceTimersByTime(79);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(2);
    expect(calls).toEqual([3]);
  });

  it("cancel drops the pending call", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 50);
    d(1);
    d.cancel();
    vi.advanceTimersByTime(100);
    expect(calls).toEqual([]);
  });
});

describe("slider surface", () => {
  it("a burst of slider moves issues exactly one debounced request", async () => {
    vi.useFakeTimers();
    const server = makeServer();
    const { console_ } = await makeConsole(server);
    await vi.advanceTimersByTimeAsync(200); // initial render request
    const before = server.reenactBodies.length;

    console_.setSlider("yaw", 0.05);
    console_.setSlider("yaw", 0.10);
    console_.setSlider("yaw", 0.15);
    await vi.advanceTimersByTimeAsync(79);
    expect(server.reenactBodies.length).toBe(before);
    await vi.advanceTimersByTimeAsync(5);
    expect(server.reenactBodies.length).toBe(before + 1);
    const body = server.reenactBodies.at(-1)!;
    expect((body.pose as { yaw: number }).yaw).toBeCloseTo(0.15);
    vi.useRealTimers();
  });

  it("keyboard input beyond the hard bounds is clamped", async () => {
    vi.useFakeTimers();
    const server = makeServer();
    const { console_, root } = await makeConsole(server);
    await vi.advanceTimersByTimeAsync(200);

    console_.setSlider("yaw", 99);
    const specs = sliderSpecs(CONFIG);
    expect(console_.state.sliders.yaw).toBeCloseTo(specs.yaw.hard[1]);
    const row = root.querySelector(".slider-yaw")!;
    expect(row.classList.contains("amber")).toBe(true);

    console_.setSlider("yaw", 0.0);
    expect(row.classList.contains("amber")).toBe(false);
    vi.useRealTimers();
  });

  it("overlay toggle does not issue a request", async () => {
    vi.useFakeTimers();
    const server = makeServer();
    const { console_ } = await makeConsole(server);
    await vi.advanceTimersByTimeAsync(200);
    const before = server.reenactBodies.length;
    console_.setOverlay(false);
    console_.setOverlay(true);
    await vi.advanceTimersByTimeAsync(500);
    expect(server.reenactBodies.length).toBe(before);
    vi.useRealTimers();
  });
});

describe("stale-response guard", () => {
  it("a delayed earlier response never overwrites a newer one", async () => {
    const server = makeServer() as FakeServer & { delayCall: (i: number) => void };
    const { console_, root } = await makeConsole(server, 0);
    await flush();
    const baseline = server.reenactBodies.length; // init request done

    server.delayCall(baseline); // next call (old request) resolves only when released
    const first = console_.issue(console_.currentRequest(), "sliders");
    await flush();
    const second = console_.issue(console_.currentRequest(), "timeline");
    await second;
    const face = root.querySelector(".face") as HTMLImageElement;
    const newer = face.src;
    expect(newer).toContain(`face-r${baseline + 1}`);

    server.resolveDelayed(baseline); // old response arrives late
    await first;
    expect(face.src).toBe(newer); // still the newer frame
    expect(console_.lastResponse?.face_png_b64).toBe(`face-r${baseline + 1}`);
  });
});

describe("sweep panel", () => {
  it("renders one thumbnail per step and a scrubber over them", async () => {
    const server = makeServer();
    const { console_, root } = await makeConsole(server, 0);
    await flush();
    const sweep = await console_.runSweep("blink", 0.1, 0.6, 5);
    expect(sweep.frames.length).toBe(5);
    const thumbs = root.querySelectorAll(".filmstrip .thumb");
    expect(thumbs.length).toBe(5);
    const scrubber = root.querySelector(".scrubber") as HTMLInputElement;
    expect(scrubber.max).toBe("4");
    expect(console_.exportGridSources()).toEqual(
      [0, 1, 2, 3, 4].map((i) => `data:image/png;base64,face-s${i}`));
  });

  it("offers exactly the four control variables", async () => {
    const server = makeServer();
    const { root } = await makeConsole(server, 0);
    await flush();
    const options = Array.from(root.querySelectorAll(".sweep-variable option"))
      .map((o) => (o as HTMLOptionElement).value);
    expect(options).toEqual(["yaw", "pitch", "roll", "blink"]);
  });
});

describe("audio timeline", () => {
  function wavBytes(samples: Float32Array, rate: number): ArrayBuffer {
    const buffer = new ArrayBuffer(44 + samples.length * 4);
    const view = new DataView(buffer);
    const write = (offset: number, text: string) => {
      for (let i = 0; i < text.length; i++) view.setUint8(offset + i, text.charCodeAt(i));
    };
    write(0, "RIFF");
    view.setUint32(4, 36 + samples.length * 4, true);
    write(8, "WAVE");
    write(12, "fmt ");
    view.setUint32(16, 16, true);
    view.setUint16(20, 3, true); // float
    view.setUint16(22, 1, true);
    view.setUint32(24, rate, true);
    view.setUint32(28, rate * 4, true);
    view.setUint16(32, 4, true);
    view.setUint16(34, 32, true);
    write(36, "data");
    view.setUint32(40, samples.length * 4, true);
    new Float32Array(buffer, 44).set(samples);
    return buffer;
  }

  it("decodes float32 wav round trip", () => {
    const samples = new Float32Array([0, 0.25, -0.5, 1]);
    const decoded = decodeWav(wavBytes(samples, 8000));
    expect(decoded.sampleRate).toBe(8000);
    expect(Array.from(decoded.samples)).toEqual(Array.from(samples));
  });

  it("cursor at frame k sends that frame's centered window", async () => {
    const server = makeServer();
    const { console_ } = await makeConsole(server, 0);
    await flush();
    const rate = 8000;
    const samples = new Float32Array(rate); // 1s ramp
    for (let i = 0; i < rate; i++) samples[i] = i / rate;
    console_.loadAudioBuffer(wavBytes(samples, rate));

    console_.setCursor(10); // t = 0.4s
    await flush();
    const body = server.reenactBodies.at(-1)!;
    expect(body.sample_rate).toBe(rate);
    const length = Math.round(0.2 * rate);
    const expected = windowForFrame(samples, rate, 10, 25, length);
    expect(body.audio_pcm_b64).toBe(pcmToBase64(expected));
  });

  it("play advances the cursor at the configured fps while sliders stay live", async () => {
    vi.useFakeTimers();
    const server = makeServer();
    const { console_ } = await makeConsole(server);
    await vi.advanceTimersByTimeAsync(200);
    console_.play();
    await vi.advanceTimersByTimeAsync(1000 / 25 * 3 + 5);
    console_.pause();
    expect(console_.state.cursorFrame).toBeGreaterThanOrEqual(3);
    // pose slider remains usable during playback
    console_.setSlider("pitch", 0.1);
    expect(console_.state.sliders.pitch).toBeCloseTo(0.1);
    vi.useRealTimers();
  });
});

describe("clamp helper", () => {
  it("clamps to bounds", () => {
    expect(clamp(5, 0, 1)).toBe(1);
    expect(clamp(-5, 0, 1)).toBe(0);
    expect(clamp(0.5, 0, 1)).toBe(0.5);
  });
});
