/** Payload types mirroring the platform API. The dashboard renders these
 * verbatim: colors, scores, and grades always come from the server. */

export type AlertColor = "red" | "yellow" | "green";

export interface AlertDto {
  token: string;
  dimension: string; // "inschool:<subject>" | "exam:<subject>" | "behavior"
  color: AlertColor;
  metric: number;
  config_snapshot: number;
  generated_at: string;
}

export interface AlertsResponse {
  alerts: AlertDto[];
  warnings: string[];
}

export interface ThresholdConfig {
  teacher_id: string;
  subject: string | null;
  inschool_red_cutoff: number;
  inschool_yellow_cutoff: number;
  exam_yellow_deviation: number;
  exam_red_deviation: number;
  behavior_red: number;
  behavior_yellow: number;
}

export const DEFAULT_THRESHOLDS: ThresholdConfig = {
  teacher_id: "default",
  subject: null,
  inschool_red_cutoff: -10,
  inschool_yellow_cutoff: -3,
  exam_yellow_deviation: -1,
  exam_red_deviation: -2,
  behavior_red: 0.7,
  behavior_yellow: 0.4,
};

export interface WordCloudEntry {
  term: string;
  count: number;
}

export interface HeatmapCell {
  sen_type: string;
  activity_category: string;
  phi: number | null;
  lift: number | null;
  support: number;
}

export interface TalentEvidence {
  category: string;
  kind: string;
  detail: string;
  contribution: number;
}

export interface TalentEntry {
  token: string;
  score: number;
  evidence: TalentEvidence[];
}

export interface Recommendation {
  elective_id: string;
  score: number;
  cross_school: boolean;
  cold_start: boolean;
}

export interface Predictions {
  token: string;
  as_of: [number, number];
  scores: Record<string, number>;
  exam_grades: Record<string, number>;
  behavior_risk: number | null;
}

export interface TermScoreDto {
  subject: string;
  year: number;
  term: number;
  score: number;
}

export interface BehaviorEventDto {
  kind: string;
  date: string;
  detail: string | null;
}

export interface StudentRecordDto {
  token: string;
  school: string;
  cohort_year: number;
  scores: TermScoreDto[];
  behavior: BehaviorEventDto[];
  target_grades: Record<string, number>;
}

export interface HealthInfo {
  status: string;
  schools: string[];
  students: number;
}
