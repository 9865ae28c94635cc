/**
 * Writes the five deterministic sample JPEGs the committed sample outputs
 * are extracted from. Pure functions of pixel coordinates, so the bytes
 * are reproducible on any host.
 */

import { mkdirSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'
import jpeg from 'jpeg-js'

const SIDE = 64

type Pattern = (x: number, y: number) => [number, number, number]

const PATTERNS: Record<string, Pattern> = {
  'img_000.jpg': (x, y) => [4 * x, 4 * y, 128],
  'img_001.jpg': (x, y) => {
    const inside = (x - 20) ** 2 + (y - 24) ** 2 <= 100
    return inside ? [240, 220, 40] : [30, 30, 60]
  },
  'img_002.jpg': (x, y) => {
    const a = x >= 8 && x < 24 && y >= 8 && y < 24
    const b = x >= 40 && x < 60 && y >= 36 && y < 56
    return a ? [220, 60, 60] : b ? [60, 220, 90] : [20, 20, 20]
  },
  'img_003.jpg': (x, _y) => (Math.floor(x / 8) % 2 === 0
    ? [200, 200, 200] : [40, 40, 110]),
  'img_004.jpg': () => [128, 128, 128],
}

export function writeSamples(dir: string): string[] {
  mkdirSync(dir, { recursive: true })
  const names = Object.keys(PATTERNS).sort()
  for (const name of names) {
    const rgba = Buffer.alloc(SIDE * SIDE * 4)
    for (let y = 0; y < SIDE; y++) {
      for (let x = 0; x < SIDE; x++) {
        const [r, g, b] = PATTERNS[name](x, y)
        const at = (y * SIDE + x) * 4
        rgba[at] = r
        rgba[at + 1] = g
        rgba[at + 2] = b
        rgba[at + 3] = 255
      }
    }
    const encoded = jpeg.encode(
      { data: rgba, width: SIDE, height: SIDE }, 92)
    writeFileSync(join(dir, name), encoded.data)
  }
  return names
}

const invokedDirectly = process.argv[1] &&
  import.meta.url.endsWith(process.argv[1].split('/').pop() as string)
if (invokedDirectly) {
  const dir = process.argv[2] ?? 'sample_images'
  const names = writeSamples(dir)
  process.stdout.write(`wrote ${names.length} images to ${dir}\n`)
}
