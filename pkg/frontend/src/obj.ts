// ASCII OBJ parsing: "v x y z" / "f i j k" with 1-based indices.
// The UI never computes geometry; this only unpacks server-provided text
// into GPU-ready buffers.

export interface ParsedMesh {
  positions: Float32Array; // 3 * vertexCount
  indices: Uint32Array; // 3 * triangleCount
}

export function parseObj(text: string): ParsedMesh {
  const positions: number[] = [];
  const indices: number[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (line.startsWith("v ")) {
      const [, x, y, z] = line.split(/\s+/);
      positions.push(Number(x), Number(y), Number(z));
    } else if (line.startsWith("f ")) {
      const verts = line
        .split(/\s+/)
        .slice(1)
        .map((tok) => {
          const idx = Number(tok.split("/")[0]);
          const n = positions.length / 3;
          const zeroBased = idx < 0 ? n + idx : idx - 1;
          if (zeroBased < 0 || zeroBased >= n) {
            throw new Error(`face index ${idx} out of range (${n} vertices)`);
          }
          return zeroBased;
        });
      for (let k = 1; k + 1 < verts.length; k++) {
        indices.push(verts[0], verts[k], verts[k + 1]);
      }
    }
  }
  return { positions: new Float32Array(positions), indices: new Uint32Array(indices) };
}

export function meshBounds(mesh: ParsedMesh): { min: [number, number, number]; max: [number, number, number] } {
  const min: [number, number, number] = [Infinity, Infinity, Infinity];
  const max: [number, number, number] = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < mesh.positions.length; i += 3) {
    for (let d = 0; d < 3; d++) {
      min[d] = Math.min(min[d], mesh.positions[i + d]);
      max[d] = Math.max(max[d], mesh.positions[i + d]);
    }
  }
  return { min, max };
}
