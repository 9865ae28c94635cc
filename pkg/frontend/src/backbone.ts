/**
 * Frozen convolutional backbone producing k feature maps on a d x d grid.
 *
 * No pretrained checkpoints are bundled or downloaded; a backbone id of the
 * form "desk-k<channels>-d<side>" names a fixed architecture whose weights
 * are generated from a seed derived from the id, then frozen. Two runs with
 * the same id therefore produce identical features, and the manifest records
 * a hash of the weight bytes so consumers can confirm which weights made a
 * file.
 */

import { crc32 } from 'node:zlib'
import * as tf from '@tensorflow/tfjs'
import type { DecodedImage } from './image.js'

export class BackboneError extends Error {}

export interface BackboneSpec {
  id: string
  /** output channels (feature maps) */
  k: number
  /** output spatial side */
  d: number
  /** square input size the image is resized to */
  inputSize: number
}

const ID_PATTERN = /^desk-k([1-9][0-9]*)-d([1-9][0-9]*)$/

export const DEFAULT_BACKBONE = 'desk-k32-d7'

export function parseBackboneId(id: string): BackboneSpec {
  const m = ID_PATTERN.exec(id)
  if (!m) {
    throw new BackboneError(
      `unknown backbone ${JSON.stringify(id)}; available backbones look ` +
      'like desk-k<channels>-d<side>, e.g. desk-k32-d7')
  }
  const k = Number(m[1])
  const d = Number(m[2])
  if (k > 4096 || d > 64) {
    throw new BackboneError(`backbone ${id} is too large (k <= 4096, d <= 64)`)
  }
  // Three stride-2 convolutions take inputSize down to d.
  return { id, k, d, inputSize: d * 8 }
}

function fnv1a(text: string): number {
  let hash = 0x811c9dc5
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i)
    hash = Math.imul(hash, 0x01000193)
  }
  return hash >>> 0
}

interface ConvLayer {
  kernel: tf.Tensor4D
  bias: tf.Tensor1D
}

export class FrozenBackbone {
  readonly spec: BackboneSpec
  readonly weightsHash: string
  private readonly layers: ConvLayer[]

  private constructor(spec: BackboneSpec, layers: ConvLayer[], hash: string) {
    this.spec = spec
    this.layers = layers
    this.weightsHash = hash
  }

  static create(id: string): FrozenBackbone {
    const spec = parseBackboneId(id)
    const widths = [3, Math.max(8, spec.k >> 2), Math.max(8, spec.k >> 1),
                    spec.k]
    const seed0 = fnv1a(id)
    const layers: ConvLayer[] = []
    let running = 0
    for (let i = 0; i + 1 < widths.length; i++) {
      const fanIn = widths[i] * 9
      const bound = Math.sqrt(6 / fanIn)
      const kernel = tf.randomUniform(
        [3, 3, widths[i], widths[i + 1]], -bound, bound, 'float32',
        seed0 + i * 1009 + 1) as tf.Tensor4D
      const bias = tf.zeros([widths[i + 1]]) as tf.Tensor1D
      const values = kernel.dataSync() as Float32Array
      const bytes = Buffer.from(values.buffer, values.byteOffset,
                                values.byteLength)
      running = crc32(bytes, running) >>> 0
      layers.push({ kernel, bias })
    }
    return new FrozenBackbone(
      spec, layers, `0x${running.toString(16).padStart(8, '0')}`)
  }

  /**
   * Resize to the input contract and run the network.
   * Returns the (d, d, k) feature volume row-major; all values >= 0.
   */
  features(image: DecodedImage): Float32Array {
    const { inputSize } = this.spec
    const result = tf.tidy(() => {
      let x: tf.Tensor4D = tf
        .tensor3d(image.pixels, [image.height, image.width, 3])
        .expandDims(0)
      x = tf.image.resizeBilinear(x, [inputSize, inputSize])
      for (const layer of this.layers) {
        x = tf.conv2d(x, layer.kernel, 2, 'same')
          .add(layer.bias)
          .relu()
      }
      return x.squeeze([0])
    })
    const data = result.dataSync() as Float32Array
    result.dispose()
    return data
  }

  dispose(): void {
    for (const layer of this.layers) {
      layer.kernel.dispose()
      layer.bias.dispose()
    }
  }
}
