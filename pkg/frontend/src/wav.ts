// Minimal WAV reader for the audio timeline: 16-bit PCM and 32-bit float,
// mono or downmixed. No WebAudio dependency, so it runs in tests too.

export interface WavData {
  sampleRate: number;
  samples: Float32Array;
}

export function decodeWav(buffer: ArrayBuffer): WavData {
  const view = new DataView(buffer);
  const tag = (offset: number) =>
    String.fromCharCode(view.getUint8(offset), view.getUint8(offset + 1),
                        view.getUint8(offset + 2), view.getUint8(offset + 3));
  if (tag(0) !== "RIFF" || tag(8) !== "WAVE") throw new Error("not a WAV file");

  let offset = 12;
  let format = 0;
  let channels = 1;
  let sampleRate = 0;
  let bits = 0;
  let dataOffset = -1;
  let dataLength = 0;
  while (offset + 8 <= view.byteLength) {
    const chunk = tag(offset);
    const size = view.getUint32(offset + 4, true);
    if (chunk === "fmt ") {
      format = view.getUint16(offset + 8, true);
      channels = view.getUint16(offset + 10, true);
      sampleRate = view.getUint32(offset + 12, true);
      bits = view.getUint16(offset + 22, true);
    } else if (chunk === "data") {
      dataOffset = offset + 8;
      dataLength = size;
    }
    offset += 8 + size + (size % 2);
  }
  if (dataOffset < 0 || sampleRate === 0) throw new Error("malformed WAV file");

  let interleaved: Float32Array;
  if (format === 3 && bits === 32) {
    interleaved = new Float32Array(buffer.slice(dataOffset, dataOffset + dataLength));
  } else if (format === 1 && bits === 16) {
    const raw = new Int16Array(buffer.slice(dataOffset, dataOffset + dataLength));
    interleaved = new Float32Array(raw.length);
    for (let i = 0; i < raw.length; i++) interleaved[i] = raw[i] / 32768;
  } else {
    throw new Error(`unsupported WAV format (${format}, ${bits} bits)`);
  }

  if (channels === 1) return { sampleRate, samples: interleaved };
  const frames = Math.floor(interleaved.length / channels);
  const mono = new Float32Array(frames);
  for (let i = 0; i < frames; i++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) acc += interleaved[i * channels + c];
    mono[i] = acc / channels;
  }
  return { sampleRate, samples: mono };
}

// Window of `length` samples centered on frame `frameIndex / fps`, zero padded.
export function windowForFrame(samples: Float32Array, sampleRate: number, frameIndex: number,
                               fps: number, length: number): Float32Array {
  const center = Math.round((frameIndex / fps) * sampleRate);
  const start = center - Math.floor(length / 2);
  const out = new Float32Array(length);
  const lo = Math.max(start, 0);
  const hi = Math.min(start + length, samples.length);
  for (let i = lo; i < hi; i++) out[i - start] = samples[i];
  return out;
}

export function pcmToBase64(samples: Float32Array): string {
  const bytes = new Uint8Array(samples.buffer.slice(0));
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}
