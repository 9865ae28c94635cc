/** JPEG decoding into float RGB planes for the backbone. */

import { readFileSync } from 'node:fs'
import jpeg from 'jpeg-js'

export interface DecodedImage {
  width: number
  height: number
  /** RGB in [0, 1], row-major, length width * height * 3. */
  pixels: Float32Array
}

export function decodeJpegFile(path: string): DecodedImage {
  const raw = jpeg.decode(readFileSync(path), { useTArray: true })
  const n = raw.width * raw.height
  const pixels = new Float32Array(n * 3)
  for (let i = 0; i < n; i++) {
    pixels[i * 3] = raw.data[i * 4] / 255
    pixels[i * 3 + 1] = raw.data[i * 4 + 1] / 255
    pixels[i * 3 + 2] = raw.data[i * 4 + 2] / 255
  }
  return { width: raw.width, height: raw.height, pixels }
}
