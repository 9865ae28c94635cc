/**
 * Command line mirror of the extraction job fields.
 *
 * Exit codes follow the training package: 0 success (skipped images are
 * reported in the manifest, not fatal), 1 usage or validation problems,
 * 2 unexpected runtime failure.
 */

import { parseArgs } from 'node:util'

import { BackboneError, DEFAULT_BACKBONE } from './backbone.js'
import { DEFAULT_ROI_CAP, ExtractionError, runExtraction } from './extract.js'
import { VeftFormatError } from './veft.js'

const USAGE = `usage: extract --images DIR --out DIR [--mode grid|roi]
               [--roi-cap N] [--backbone ID]

Runs the frozen backbone over every *.jpg/*.jpeg in --images and writes
one .veft feature file per image plus a manifest.json index to --out.

options:
  --images DIR    directory of JPEG images (required)
  --out DIR       output directory, created if missing (required)
  --mode MODE     "grid" (k feature maps on a d x d grid, the default)
                  or "roi" (up to --roi-cap pooled regions with boxes)
  --roi-cap N     most regions kept per image (default ${DEFAULT_ROI_CAP})
  --backbone ID   frozen backbone id (default ${DEFAULT_BACKBONE})
  --help          show this message
`

export function main(argv: string[]): number {
  let parsed
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        images: { type: 'string' },
        out: { type: 'string' },
        mode: { type: 'string' },
        'roi-cap': { type: 'string' },
        backbone: { type: 'string' },
        help: { type: 'boolean' },
      },
      allowPositionals: false,
    })
  } catch (exc) {
    process.stderr.write(`error: ${(exc as Error).message}\n${USAGE}`)
    return 1
  }
  const values = parsed.values
  if (values.help) {
    process.stdout.write(USAGE)
    return 0
  }
  if (!values.images || !values.out) {
    process.stderr.write(`error: --images and --out are required\n${USAGE}`)
    return 1
  }
  let roiCap = DEFAULT_ROI_CAP
  if (values['roi-cap'] !== undefined) {
    roiCap = Number(values['roi-cap'])
    if (!Number.isInteger(roiCap) || roiCap < 1) {
      process.stderr.write(
        `error: --roi-cap must be a positive integer, got ` +
        `${JSON.stringify(values['roi-cap'])}\n`)
      return 1
    }
  }
  try {
    const summary = runExtraction({
      imageDir: values.images,
      outDir: values.out,
      mode: values.mode as 'grid' | 'roi' | undefined,
      roiCap,
      backbone: values.backbone,
    })
    const m = summary.manifest
    process.stdout.write(JSON.stringify({
      manifest: summary.manifestPath,
      kind: m.kind,
      backbone: m.backbone,
      images_written: Object.keys(m.files).length,
      errors: m.errors,
      ...(m.kind === 'roi' ? { fallbacks: m.fallbacks } : {}),
    }, null, 2) + '\n')
    return 0
  } catch (exc) {
    if (exc instanceof ExtractionError || exc instanceof BackboneError ||
        exc instanceof VeftFormatError) {
      process.stderr.write(`error: ${exc.message}\n`)
      return 1
    }
    if (exc instanceof Error && 'code' in exc &&
        typeof (exc as NodeJS.ErrnoException).code === 'string') {
      process.stderr.write(`error: ${exc.message}\n`)
      return 1
    }
    process.stderr.write(`unexpected failure: ${String(exc)}\n`)
    return 2
  }
}
