/**
 * Grid and ROI feature extraction over a directory of JPEG images.
 *
 * Each image becomes one VEFT file; a manifest.json index is written once
 * at the end. Undecodable images are skipped and listed under "errors" in
 * the manifest so one bad file never poisons a batch; problems with the
 * output directory itself are fatal.
 */

import { mkdirSync, readdirSync, statSync, writeFileSync } from 'node:fs'
import { basename, join } from 'node:path'

import { DEFAULT_BACKBONE, FrozenBackbone } from './backbone.js'
import { decodeJpegFile } from './image.js'
import {
  Manifest,
  MANIFEST_FORMAT,
  MANIFEST_NAME,
  MANIFEST_VERSION,
  stableJson,
} from './manifest.js'
import { NamedTensor, veftEncode } from './veft.js'

export class ExtractionError extends Error {}

export const DEFAULT_ROI_CAP = 10

export interface ExtractionJob {
  imageDir: string
  outDir: string
  mode: 'grid' | 'roi'
  roiCap: number
  backbone: string
}

export function makeJob(partial: Partial<ExtractionJob>): ExtractionJob {
  const job: ExtractionJob = {
    imageDir: partial.imageDir ?? '',
    outDir: partial.outDir ?? '',
    mode: partial.mode ?? 'grid',
    roiCap: partial.roiCap ?? DEFAULT_ROI_CAP,
    backbone: partial.backbone ?? DEFAULT_BACKBONE,
  }
  if (!job.imageDir) throw new ExtractionError('an image directory is required')
  if (!job.outDir) throw new ExtractionError('an output directory is required')
  if (job.mode !== 'grid' && job.mode !== 'roi') {
    throw new ExtractionError(
      `mode must be "grid" or "roi", got ${JSON.stringify(job.mode)}`)
  }
  if (!Number.isInteger(job.roiCap) || job.roiCap < 1) {
    throw new ExtractionError(`roi cap must be a positive integer, ` +
                              `got ${job.roiCap}`)
  }
  return job
}

export interface ExtractionSummary {
  manifest: Manifest
  manifestPath: string
}

interface Box {
  /** cell coordinates, end-exclusive */
  y0: number
  x0: number
  y1: number
  x1: number
  score: number
  index: number
}

function listJpegs(dir: string): string[] {
  let names: string[]
  try {
    names = readdirSync(dir)
  } catch (exc) {
    throw new ExtractionError(`cannot list image directory ${dir}: ` +
                              `${(exc as Error).message}`)
  }
  return names
    .filter(n => /\.jpe?g$/i.test(n))
    .filter(n => statSync(join(dir, n)).isFile())
    .sort()
}

/** (d, d, k) row-major volume -> (k, d, d) row-major, the VEFT grid layout. */
function toChannelFirst(features: Float32Array, d: number,
                        k: number): Float32Array {
  const out = new Float32Array(k * d * d)
  for (let y = 0; y < d; y++) {
    for (let x = 0; x < d; x++) {
      const cell = (y * d + x) * k
      for (let c = 0; c < k; c++) {
        out[(c * d + y) * d + x] = features[cell + c]
      }
    }
  }
  return out
}

function cellSaliency(features: Float32Array, d: number,
                      k: number): Float64Array {
  const saliency = new Float64Array(d * d)
  for (let cell = 0; cell < d * d; cell++) {
    let sum = 0
    for (let c = 0; c < k; c++) {
      const v = features[cell * k + c]
      sum += v * v
    }
    saliency[cell] = Math.sqrt(sum)
  }
  return saliency
}

function meanOver(saliency: Float64Array, d: number, box: Box): number {
  let sum = 0
  for (let y = box.y0; y < box.y1; y++) {
    for (let x = box.x0; x < box.x1; x++) {
      sum += saliency[y * d + x]
    }
  }
  return sum / ((box.y1 - box.y0) * (box.x1 - box.x0))
}

function iou(a: Box, b: Box): number {
  const iy = Math.max(0, Math.min(a.y1, b.y1) - Math.max(a.y0, b.y0))
  const ix = Math.max(0, Math.min(a.x1, b.x1) - Math.max(a.x0, b.x0))
  const inter = iy * ix
  const union = (a.y1 - a.y0) * (a.x1 - a.x0) +
    (b.y1 - b.y0) * (b.x1 - b.x0) - inter
  return inter / union
}

/**
 * Square windows over the cell grid scored by mean saliency. Windows must
 * beat the image-wide mean to count as proposals; ordering is score
 * descending with candidate index breaking ties, then greedy suppression
 * of overlaps (IoU > 0.5) and the cap. Returns [] when nothing clears the
 * threshold, which callers turn into the whole-image fallback.
 */
export function proposeBoxes(saliency: Float64Array, d: number,
                             cap: number): Box[] {
  let mean = 0
  for (let i = 0; i < saliency.length; i++) mean += saliency[i]
  mean /= saliency.length

  const sides = [2, 3].filter(s => s <= d)
  if (sides.length === 0) sides.push(1)
  const candidates: Box[] = []
  for (const side of sides) {
    for (let y0 = 0; y0 + side <= d; y0++) {
      for (let x0 = 0; x0 + side <= d; x0++) {
        const box: Box = {
          y0, x0, y1: y0 + side, x1: x0 + side,
          score: 0, index: candidates.length,
        }
        box.score = meanOver(saliency, d, box)
        if (box.score > mean) candidates.push(box)
      }
    }
  }
  candidates.sort((a, b) => (b.score - a.score) || (a.index - b.index))
  const kept: Box[] = []
  for (const box of candidates) {
    if (kept.length >= cap) break
    if (kept.every(other => iou(box, other) <= 0.5)) kept.push(box)
  }
  return kept
}

function pooledFeature(features: Float32Array, d: number, k: number,
                       box: Box): Float32Array {
  const out = new Float32Array(k)
  const area = (box.y1 - box.y0) * (box.x1 - box.x0)
  for (let y = box.y0; y < box.y1; y++) {
    for (let x = box.x0; x < box.x1; x++) {
      const cell = (y * d + x) * k
      for (let c = 0; c < k; c++) {
        out[c] += features[cell + c] / area
      }
    }
  }
  return out
}

function roiTensors(features: Float32Array, d: number, k: number,
                    cap: number): { tensors: NamedTensor[]; fallback: boolean } {
  const saliency = cellSaliency(features, d, k)
  let boxes = proposeBoxes(saliency, d, cap)
  const fallback = boxes.length === 0
  if (fallback) {
    boxes = [{ y0: 0, x0: 0, y1: d, x1: d, score: 0, index: 0 }]
  }
  const n = boxes.length
  const rois = new Float32Array(n * k)
  const coords = new Float32Array(n * 4)
  boxes.forEach((box, i) => {
    rois.set(pooledFeature(features, d, k, box), i * k)
    coords[i * 4] = box.x0 / d
    coords[i * 4 + 1] = box.y0 / d
    coords[i * 4 + 2] = box.x1 / d
    coords[i * 4 + 3] = box.y1 / d
  })
  return {
    tensors: [
      { name: 'rois', dims: [n, k], data: rois },
      { name: 'boxes', dims: [n, 4], data: coords },
    ],
    fallback,
  }
}

export function runExtraction(partial: Partial<ExtractionJob>):
    ExtractionSummary {
  const job = makeJob(partial)
  const files = listJpegs(job.imageDir)
  // Output directory problems are fatal, unlike per-image failures.
  mkdirSync(job.outDir, { recursive: true })

  const backbone = FrozenBackbone.create(job.backbone)
  const { k, d } = backbone.spec
  const written: Record<string, string> = {}
  const errors: Record<string, string> = {}
  const fallbacks: string[] = []
  try {
    for (const file of files) {
      const imageId = basename(file)
      const stem = imageId.replace(/\.[^.]*$/, '')
      const outName = `${stem}.veft`
      if (Object.values(written).includes(outName)) {
        errors[imageId] = `output name ${outName} already taken; rename ` +
          'one of the colliding images'
        continue
      }
      let tensors: NamedTensor[]
      let fellBack = false
      try {
        const features = backbone.features(decodeJpegFile(
          join(job.imageDir, file)))
        if (job.mode === 'grid') {
          tensors = [{
            name: 'grid', dims: [k, d, d],
            data: toChannelFirst(features, d, k),
          }]
        } else {
          const roi = roiTensors(features, d, k, job.roiCap)
          tensors = roi.tensors
          fellBack = roi.fallback
        }
      } catch (exc) {
        errors[imageId] = (exc as Error).message
        continue
      }
      writeFileSync(join(job.outDir, outName), veftEncode(tensors))
      written[imageId] = outName
      if (fellBack) fallbacks.push(imageId)
    }
  } finally {
    backbone.dispose()
  }

  const base = {
    format: MANIFEST_FORMAT,
    version: MANIFEST_VERSION,
    files: written,
    backbone: { id: job.backbone, weights_hash: backbone.weightsHash },
    errors,
  } as const
  const manifest: Manifest = job.mode === 'grid'
    ? { ...base, kind: 'grid', k, d }
    : { ...base, kind: 'roi', dim: k, roi_cap: job.roiCap,
        fallbacks: fallbacks.sort() }
  const manifestPath = join(job.outDir, MANIFEST_NAME)
  writeFileSync(manifestPath, stableJson(manifest))
  return { manifest, manifestPath }
}
