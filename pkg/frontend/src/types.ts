// Wire types for the namegrounder HTTP API (schema namegrounder-wire-v1).
// Boxes are pixel coordinates [x_min, y_min, x_max, y_max].

export type Box = [number, number, number, number];

export interface SceneInstance {
  instance_id: string;
  object_id: string;
  category: string;
  colors: string[];
  size_class: string;
  shape: string;
  x: number;
  y: number;
  yaw: number;
  extents: [number, number];
  height: number;
  graspable: boolean;
  box: Box;
}

export interface ScenePayload {
  version: string;
  scene_id: string;
  seed: number;
  camera_view: string;
  image: { width: number; height: number };
  table_bounds: [number, number, number, number];
  instances: SceneInstance[];
}

export interface MemoryEntry {
  name: string;
  display_name: string;
  created_at: number;
  source_scene_id: string;
  observations: number;
}

export interface MemoryPayload {
  version: string;
  names: MemoryEntry[];
}

export interface EntitySpan {
  phrase: string;
  start: number;
  end: number;
  entity_type: string;
  confidence: number;
}

export interface Candidate {
  instance_id: string;
  box: Box;
  score: number;
}

export interface ChosenRef {
  instance_id: string;
  box: Box | null;
}

export interface EpisodeRecord {
  instruction_id: string;
  scene_id: string;
  text: string;
  episode_kind: string;
  gold_class: string;
  predicted_class: string;
  ambiguity_label: string;
  icr_ok: boolean;
  pr_ok: boolean;
  br_ok: boolean;
  sr_ok: boolean;
  failure_stage: string;
  chosen_src: string | null;
  chosen_src_box: Box | null;
  chosen_dst: string | null;
  chosen_dst_box: Box | null;
  stored_name: string | null;
}

export interface SessionPayload {
  version: string;
  session_id: string;
  scene: ScenePayload;
  memory: MemoryPayload;
}

export interface InstructionResponse {
  version: string;
  session_id: string;
  step: number;
  instruction: {
    text: string;
    class: string;
    confidence: number;
    ambiguity_label: string;
  };
  entities: EntitySpan[];
  candidates: Candidate[][];
  chosen: { src: ChosenRef | null; dst: ChosenRef | null };
  result: EpisodeRecord;
  stored_name: string | null;
  scene: ScenePayload;
  memory: MemoryPayload;
}
