// Reader for the project's binary tensor container (pointcloud.bin etc.):
// magic "ANISEBIN", u32 LE version, u32 LE manifest length, JSON manifest,
// 64-byte-aligned float32/int32 blobs at payload-relative offsets.

const MAGIC = "ANISEBIN";
const ALIGN = 64;

interface TensorEntry {
  name: string;
  dtype: "float32" | "int32";
  shape: number[];
  offset: number;
  nbytes: number;
}

export interface Container {
  meta: Record<string, unknown>;
  tensors: Map<string, { shape: number[]; data: Float32Array | Int32Array }>;
}

export function parseContainer(buf: ArrayBuffer): Container {
  const bytes = new Uint8Array(buf);
  const magic = new TextDecoder().decode(bytes.slice(0, 8));
  if (magic !== MAGIC) {
    throw new Error(`not a container file (magic ${JSON.stringify(magic)})`);
  }
  const view = new DataView(buf);
  const version = view.getUint32(8, true);
  if (version !== 1) {
    throw new Error(`unsupported container version ${version}`);
  }
  const manifestLen = view.getUint32(12, true);
  const manifest = JSON.parse(new TextDecoder().decode(bytes.slice(16, 16 + manifestLen)));
  const payloadStart = Math.ceil((16 + manifestLen) / ALIGN) * ALIGN;

  const tensors = new Map<string, { shape: number[]; data: Float32Array | Int32Array }>();
  for (const entry of (manifest.tensors ?? []) as TensorEntry[]) {
    const start = payloadStart + entry.offset;
    const count = entry.nbytes / 4;
    const data =
      entry.dtype === "float32"
        ? new Float32Array(buf.slice(start, start + entry.nbytes))
        : new Int32Array(buf.slice(start, start + entry.nbytes));
    if (data.length !== count) {
      throw new Error(`tensor ${entry.name} payload truncated`);
    }
    tensors.set(entry.name, { shape: entry.shape, data });
  }
  return { meta: manifest.meta ?? {}, tensors };
}

export function pointsFromContainer(buf: ArrayBuffer): number[][] {
  const { tensors } = parseContainer(buf);
  const entry = tensors.get("points");
  if (!entry || entry.shape.length !== 2 || entry.shape[1] !== 3) {
    throw new Error("container has no (N, 3) 'points' tensor");
  }
  const out: number[][] = [];
  for (let i = 0; i < entry.shape[0]; i++) {
    out.push([entry.data[3 * i], entry.data[3 * i + 1], entry.data[3 * i + 2]]);
  }
  return out;
}

export function base64FromBytes(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i++) {
    binary += String.fromCharCode(bytes[i]);
  }
  return btoa(binary);
}
