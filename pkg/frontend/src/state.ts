/**
 * Pure annotation-session state: label selections, focus movement, the
 * submit gate, and keyboard mapping. Kept free of DOM and network code so
 * it is trivially testable.
 */

export type StepLabel = "positive" | "negative" | "neutral";

export interface TaskView {
  task_id: string;
  split_id: number;
  status: string;
  assignee: string | null;
  version: number;
  image: string | null;
  question: string;
  ground_truth: string;
  steps: string[];
  draft_labels: (StepLabel | null)[] | null;
}

export interface Session {
  taskId: string;
  version: number;
  steps: string[];
  labels: (StepLabel | null)[];
  focus: number;
}

/** Labels by key: 1/2/3 for positive/negative/neutral. */
export const KEY_TO_LABEL: Record<string, StepLabel> = {
  "1": "positive",
  "2": "negative",
  "3": "neutral",
};

export function startSession(task: TaskView): Session {
  const drafts = task.draft_labels ?? task.steps.map(() => null);
  return {
    taskId: task.task_id,
    version: task.version,
    steps: [...task.steps],
    labels: task.steps.map((_, i) => drafts[i] ?? null),
    focus: 0,
  };
}

export function labeledCount(session: Session): number {
  return session.labels.filter((label) => label !== null).length;
}

/** Submit is allowed only when every step has a selection. */
export function canSubmit(session: Session): boolean {
  return session.labels.length > 0 && session.labels.every((label) => label !== null);
}

function nextUnlabeled(labels: (StepLabel | null)[], after: number): number {
  for (let i = after + 1; i < labels.length; i++) {
    if (labels[i] === null) return i;
  }
  return Math.min(after + 1, labels.length - 1);
}

export function setLabel(session: Session, index: number, label: StepLabel): Session {
  if (index < 0 || index >= session.labels.length) return session;
  const labels = [...session.labels];
  labels[index] = label;
  return { ...session, labels, focus: nextUnlabeled(labels, index) };
}

export function moveFocus(session: Session, delta: number): Session {
  const last = session.labels.length - 1;
  const focus = Math.max(0, Math.min(last, session.focus + delta));
  return { ...session, focus };
}

/** Returns the updated session, or null when the key is not a shortcut. */
export function handleKey(session: Session, key: string): Session | null {
  const label = KEY_TO_LABEL[key];
  if (label !== undefined) {
    return setLabel(session, session.focus, label);
  }
  if (key === "j" || key === "ArrowDown") return moveFocus(session, 1);
  if (key === "k" || key === "ArrowUp") return moveFocus(session, -1);
  return null;
}
