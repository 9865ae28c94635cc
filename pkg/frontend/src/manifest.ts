/**
 * The manifest.json index the training package opens feature directories
 * with. Core keys (format, version, kind, files, and the shape contract)
 * follow its reader exactly; the reader ignores the extra keys recorded
 * here (backbone provenance, per-image errors, ROI fallbacks).
 */

export const MANIFEST_FORMAT = 'visent-features'
export const MANIFEST_VERSION = 1
export const MANIFEST_NAME = 'manifest.json'

export interface BackboneInfo {
  id: string
  weights_hash: string
}

interface ManifestBase {
  format: typeof MANIFEST_FORMAT
  version: typeof MANIFEST_VERSION
  files: Record<string, string>
  backbone: BackboneInfo
  errors: Record<string, string>
}

export interface GridManifest extends ManifestBase {
  kind: 'grid'
  k: number
  d: number
}

export interface RoiManifest extends ManifestBase {
  kind: 'roi'
  dim: number
  roi_cap: number
  fallbacks: string[]
}

export type Manifest = GridManifest | RoiManifest

/** JSON with recursively sorted keys, two-space indent, trailing newline. */
export function stableJson(value: unknown): string {
  const sorted = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sorted)
    if (v !== null && typeof v === 'object') {
      const out: Record<string, unknown> = {}
      for (const key of Object.keys(v as object).sort()) {
        out[key] = sorted((v as Record<string, unknown>)[key])
      }
      return out
    }
    return v
  }
  return JSON.stringify(sorted(value), null, 2) + '\n'
}
