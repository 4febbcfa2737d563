/** Binary PPM (P6) frame decoding. */

export interface Frame {
  width: number;
  height: number;
  /** RGB interleaved, scaled to 0..1. */
  pixels: Float64Array;
}

export class MediaDecodeError extends Error {}

/** Parse a P6 PPM with maxval <= 255. */
export function parsePpm(raw: Buffer): Frame {
  if (raw.length < 2 || raw[0] !== 0x50 || raw[1] !== 0x36) {
    throw new MediaDecodeError("not a P6 PPM");
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    if (pos >= raw.length) throw new MediaDecodeError("truncated PPM header");
    const ch = raw[pos];
    if (ch === 0x23) {
      // comment runs to end of line
      while (pos < raw.length && raw[pos] !== 0x0a) pos++;
      pos++;
    } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
      pos++;
    } else {
      let value = 0;
      let digits = 0;
      while (pos < raw.length && raw[pos] >= 0x30 && raw[pos] <= 0x39) {
        value = value * 10 + (raw[pos] - 0x30);
        digits++;
        pos++;
      }
      if (digits === 0) throw new MediaDecodeError("malformed PPM header");
      fields.push(value);
    }
  }
  const [width, height, maxval] = fields;
  if (width < 1 || height < 1) throw new MediaDecodeError("empty PPM");
  if (maxval < 1 || maxval > 255) {
    throw new MediaDecodeError(`unsupported PPM maxval ${maxval}`);
  }
  pos++; // single whitespace after maxval
  const need = width * height * 3;
  if (raw.length - pos < need) {
    throw new MediaDecodeError(
      `truncated PPM payload: need ${need} bytes, have ${raw.length - pos}`,
    );
  }
  const pixels = new Float64Array(need);
  for (let i = 0; i < need; i++) {
    pixels[i] = raw[pos + i] / maxval;
  }
  return { width, height, pixels };
}
