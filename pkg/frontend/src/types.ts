export type VariableKind = "single-choice" | "multi-choice" | "ordinal";

export interface SchemaVariable {
  name: string;
  kind: VariableKind;
  codes?: string[];
  positive_codes?: string[];
  ordinal_range?: [number, number];
  threshold?: number | null;
  excluded?: boolean;
}

export interface Schema {
  variables: SchemaVariable[];
}

export interface Task {
  address_id: string;
  images: { street: string; satellite: string };
}

export interface NextTaskResponse {
  done: boolean;
  task?: Task;
  progress?: Progress;
}

export interface Progress {
  annotator_id: string;
  assigned: number;
  completed: number;
  remaining: number;
}

export interface SubmitAck {
  status: string;
  replaced: boolean;
}

export type AgreementResponse =
  | { status: "not yet computable"; reason: string }
  | {
      status: "ok";
      report: {
        raters: string[];
        variables: Array<{
          name: string;
          kappa: number | null;
          band: string;
          items: number;
          raters: number;
          degenerate: boolean;
        }>;
      };
    };

/** Wire format accepted by POST /api/annotations. */
export interface AnnotationPayload {
  address_id: string;
  annotator_id: string;
  timestamp: string;
  values: Record<string, string | string[] | number>;
}
