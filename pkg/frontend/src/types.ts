export type TripletAnswer = "yes" | "no" | "dnk";
export type PairAnswer = "ml" | "cl";
export type Answer = TripletAnswer | PairAnswer;
export type SessionMode = "triplet" | "pair";

export const TRIPLET_ANSWERS: TripletAnswer[] = ["yes", "no", "dnk"];
export const PAIR_ANSWERS: PairAnswer[] = ["ml", "cl"];

export interface SessionStatus {
  id: string;
  mode: SessionMode;
  dataset: string;
  total: number;
  answered: number;
  remaining: number;
  done: boolean;
  distribution: Record<string, number>;
}

export interface Query {
  id: number;
  indices: number[];
  instances: number[][];
  images: (string | null)[];
  mode: SessionMode;
}

export interface NextResponse {
  done: boolean;
  query?: Query;
}

export interface AnswerAck {
  ok: boolean;
  answered: number;
  remaining: number;
}

export interface ConfusionTable {
  labels: string[];
  matrix: number[][];
}

export interface ClusterResult {
  constraints_used: number;
  em_iterations: number;
  converged: boolean;
  fmeasure: number | null;
  ari: number | null;
  nmi: number | null;
}

export interface CreateSessionOptions {
  dataset: string;
  mode: SessionMode;
  count: number;
  seed?: number;
}
