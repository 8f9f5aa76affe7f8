// Wire types mirroring the server's JSON schemas (docs/schemas in the repo).

export interface Provenance {
  source: "decoded" | "db" | "blend";
  part_id?: string;
  source_shape_id?: string;
  alpha?: number;
  transform_override?: boolean;
}

export interface PartSummary {
  index: number;
  center: [number, number, number];
  scale: number;
  empty: boolean;
  provenance: Provenance;
}

export interface ReconstructResponse {
  session_id: string;
  parts: PartSummary[];
}

export interface Candidate {
  part_id: string;
  distance: number;
  source_shape_id: string;
}

export interface NearestResponse {
  candidates: Candidate[];
  truncated: boolean;
}

export type ObservationPayload = { points: number[][] } | { image: string };
