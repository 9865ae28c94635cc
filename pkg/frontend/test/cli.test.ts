import { spawnSync } from 'node:child_process'
import { existsSync, mkdtempSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { dirname, join } from 'node:path'
import { fileURLToPath } from 'node:url'

import { beforeAll, describe, expect, it } from 'vitest'

import { writeSamples } from '../src/make_samples.js'

// The spawn tests exercise the compiled entry point; `npm test` builds
// dist/ first via pretest.
const root = dirname(dirname(fileURLToPath(import.meta.url)))
const entry = join(root, 'dist', 'run.js')

function cli(...args: string[]) {
  const run = spawnSync(process.execPath, [entry, ...args],
                        { encoding: 'utf-8' })
  return { code: run.status, out: run.stdout, err: run.stderr }
}

let imageDir: string
beforeAll(() => {
  expect(existsSync(entry), `missing ${entry}; run npm run build`).toBe(true)
  imageDir = mkdtempSync(join(tmpdir(), 'cli-images-'))
  writeSamples(imageDir)
})

describe('usage handling', () => {
  it('prints usage on --help', () => {
    const { code, out } = cli('--help')
    expect(code).toBe(0)
    expect(out).toContain('usage: extract')
  })

  it.each([
    [[], /--images and --out are required/],
    [['--images', 'x'], /--images and --out are required/],
    [['--images', 'x', '--out', 'y', '--frobnicate'], /error:/],
    [['--images', 'x', '--out', 'y', '--roi-cap', 'many'], /roi-cap/],
    [['--images', 'x', '--out', 'y', '--roi-cap', '0'], /roi-cap/],
  ])('rejects %j', (args, message) => {
    const { code, err } = cli(...(args as string[]))
    expect(code).toBe(1)
    expect(err).toMatch(message)
  })

  it('rejects an unknown mode and backbone with named errors', () => {
    const out = mkdtempSync(join(tmpdir(), 'cli-out-'))
    const mode = cli('--images', imageDir, '--out', out, '--mode', 'mesh')
    expect(mode.code).toBe(1)
    expect(mode.err).toMatch(/mode must be "grid" or "roi"/)
    const backbone = cli('--images', imageDir, '--out', out,
                         '--backbone', 'resnet101')
    expect(backbone.code).toBe(1)
    expect(backbone.err).toMatch(/unknown backbone "resnet101"/)
  })

  it('fails cleanly when the image directory is absent', () => {
    const { code, err } = cli('--images', join(tmpdir(), 'nope-zzz'),
                              '--out', mkdtempSync(join(tmpdir(), 'cli-o-')))
    expect(code).toBe(1)
    expect(err).toMatch(/cannot list image directory/)
  })
})

describe('extraction runs', () => {
  it('writes grid features and a parseable summary', () => {
    const out = mkdtempSync(join(tmpdir(), 'cli-grid-'))
    const { code, out: stdout } = cli(
      '--images', imageDir, '--out', out, '--backbone', 'desk-k8-d4')
    expect(code).toBe(0)
    const summary = JSON.parse(stdout)
    expect(summary.kind).toBe('grid')
    expect(summary.images_written).toBe(5)
    expect(summary.errors).toEqual({})
    expect(existsSync(join(out, 'manifest.json'))).toBe(true)
    expect(existsSync(join(out, 'img_004.veft'))).toBe(true)
  })

  it('writes roi features with the cap applied', () => {
    const out = mkdtempSync(join(tmpdir(), 'cli-roi-'))
    const { code, out: stdout } = cli(
      '--images', imageDir, '--out', out, '--mode', 'roi',
      '--roi-cap', '4', '--backbone', 'desk-k8-d4')
    expect(code).toBe(0)
    const summary = JSON.parse(stdout)
    expect(summary.kind).toBe('roi')
    expect(summary.images_written).toBe(5)
    expect(summary.fallbacks).toEqual([])
  })
})
