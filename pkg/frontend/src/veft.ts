/**
 * VEFT: a bit-exact binary container for named float32 tensors.
 *
 * Layout, all integers little-endian:
 *
 *     magic   4 bytes  "VEFT"
 *     version u16      currently 1
 *     count   u32      number of tensors
 *     then per tensor:
 *         name_len u16, name UTF-8 bytes
 *         rank     u8
 *         dims     rank x u64
 *         payload  row-major float32, prod(dims) * 4 bytes
 *         crc32    u32, CRC-32 of the payload bytes
 *
 * The byte stream produced here must match the Python reader in the
 * training package byte for byte; the golden tests pin that.
 */

import { crc32 } from 'node:zlib'

export const MAGIC = 'VEFT'
export const VERSION = 1

export class VeftFormatError extends Error {}
export class VeftCorruptionError extends Error {}

export interface NamedTensor {
  name: string
  dims: number[]
  data: Float32Array
}

function payloadBytes(data: Float32Array): Buffer {
  // Serialize through a DataView so the output is little-endian on any host.
  const buf = Buffer.allocUnsafe(data.length * 4)
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength)
  for (let i = 0; i < data.length; i++) {
    view.setFloat32(i * 4, data[i], true)
  }
  return buf
}

export function veftEncode(tensors: NamedTensor[]): Buffer {
  const names = new Set<string>()
  const parts: Buffer[] = []
  const header = Buffer.allocUnsafe(10)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt16LE(VERSION, 4)
  header.writeUInt32LE(tensors.length, 6)
  parts.push(header)
  for (const tensor of tensors) {
    if (names.has(tensor.name)) {
      throw new VeftFormatError('tensor names must be unique')
    }
    names.add(tensor.name)
    const encoded = Buffer.from(tensor.name, 'utf-8')
    if (encoded.length > 0xffff) {
      throw new VeftFormatError(
        `tensor name too long (${encoded.length} bytes)`)
    }
    if (tensor.dims.length > 0xff) {
      throw new VeftFormatError(
        `tensor ${JSON.stringify(tensor.name)} rank ` +
        `${tensor.dims.length} exceeds 255`)
    }
    let elems = 1
    for (const dim of tensor.dims) {
      if (!Number.isInteger(dim) || dim < 0) {
        throw new VeftFormatError(
          `tensor ${JSON.stringify(tensor.name)} has a bad dimension ${dim}`)
      }
      elems *= dim
    }
    if (elems !== tensor.data.length) {
      throw new VeftFormatError(
        `tensor ${JSON.stringify(tensor.name)} dims [${tensor.dims}] imply ` +
        `${elems} elements, data has ${tensor.data.length}`)
    }
    const head = Buffer.allocUnsafe(2 + encoded.length + 1 +
                                    tensor.dims.length * 8)
    let at = 0
    head.writeUInt16LE(encoded.length, at); at += 2
    encoded.copy(head, at); at += encoded.length
    head.writeUInt8(tensor.dims.length, at); at += 1
    for (const dim of tensor.dims) {
      head.writeBigUInt64LE(BigInt(dim), at); at += 8
    }
    const payload = payloadBytes(tensor.data)
    const crc = Buffer.allocUnsafe(4)
    crc.writeUInt32LE(crc32(payload) >>> 0, 0)
    parts.push(head, payload, crc)
  }
  return Buffer.concat(parts)
}

class Reader {
  offset = 0
  constructor(readonly blob: Buffer) {}

  take(n: number, what: string): Buffer {
    const end = this.offset + n
    if (end > this.blob.length) {
      throw new VeftCorruptionError(
        `container truncated at byte ${this.blob.length}: needed ${n} ` +
        `bytes for ${what} starting at byte ${this.offset}`)
    }
    const chunk = this.blob.subarray(this.offset, end)
    this.offset = end
    return chunk
  }
}

const utf8 = new TextDecoder('utf-8', { fatal: true })

export function veftDecode(blob: Buffer): NamedTensor[] {
  const r = new Reader(blob)
  const header = r.take(10, 'header')
  if (header.toString('ascii', 0, 4) !== MAGIC) {
    throw new VeftFormatError('bad magic; not a VEFT container')
  }
  const version = header.readUInt16LE(4)
  if (version !== VERSION) {
    throw new VeftFormatError(
      `unsupported VEFT version ${version} (reader supports ${VERSION})`)
  }
  const count = header.readUInt32LE(6)
  const out: NamedTensor[] = []
  const seen = new Set<string>()
  for (let i = 0; i < count; i++) {
    const nameLen = r.take(2, `name length of tensor ${i}`).readUInt16LE(0)
    const nameBytes = r.take(nameLen, `name of tensor ${i}`)
    let name: string
    try {
      name = utf8.decode(nameBytes)
    } catch {
      throw new VeftFormatError(`tensor ${i} name is not valid UTF-8`)
    }
    if (seen.has(name)) {
      throw new VeftFormatError(
        `duplicate tensor name ${JSON.stringify(name)}`)
    }
    seen.add(name)
    const rank = r.take(1, `rank of ${JSON.stringify(name)}`).readUInt8(0)
    const dims: number[] = []
    let elems = 1
    for (let d = 0; d < rank; d++) {
      const big = r.take(8, `dim ${d} of ${JSON.stringify(name)}`)
        .readBigUInt64LE(0)
      if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
        throw new VeftFormatError(
          `dim ${d} of ${JSON.stringify(name)} does not fit in a JS number`)
      }
      dims.push(Number(big))
      elems *= Number(big)
    }
    const payload = r.take(elems * 4, `payload of ${JSON.stringify(name)}`)
    const stored = r.take(4, `checksum of ${JSON.stringify(name)}`)
      .readUInt32LE(0)
    const actual = crc32(payload) >>> 0
    if (stored !== actual) {
      throw new VeftCorruptionError(
        `checksum mismatch for tensor ${JSON.stringify(name)}: stored ` +
        `0x${stored.toString(16).padStart(8, '0')}, computed ` +
        `0x${actual.toString(16).padStart(8, '0')}`)
    }
    const data = new Float32Array(elems)
    const view = new DataView(payload.buffer, payload.byteOffset,
                              payload.byteLength)
    for (let e = 0; e < elems; e++) {
      data[e] = view.getFloat32(e * 4, true)
    }
    out.push({ name, dims, data })
  }
  if (r.offset !== blob.length) {
    throw new VeftFormatError(
      `${blob.length - r.offset} trailing bytes after the last tensor`)
  }
  return out
}
