import { describe, expect, it } from "vitest";

import {
  Session,
  TaskView,
  canSubmit,
  handleKey,
  labeledCount,
  moveFocus,
  setLabel,
  startSession,
} from "../src/state.js";

function task(steps: number, drafts: (null | "positive" | "negative" | "neutral")[] | null = null): TaskView {
  return {
    task_id: "t1",
    split_id: 0,
    status: "pending",
    assignee: null,
    version: 1,
    image: null,
    question: "q?",
    ground_truth: "42",
    steps: Array.from({ length: steps }, (_, i) => `step ${i}`),
    draft_labels: drafts,
  };
}

describe("submit gate", () => {
  it("blocks until every step has a selection", () => {
    let session = startSession(task(9));
    expect(canSubmit(session)).toBe(false);
    for (let i = 0; i < 8; i++) {
      session = setLabel(session, i, "positive");
      expect(canSubmit(session)).toBe(false);
    }
    session = setLabel(session, 8, "negative");
    expect(canSubmit(session)).toBe(true);
    expect(labeledCount(session)).toBe(9);
  });

  it("never allows submitting an empty selection vector", () => {
    const session = startSession(task(3));
    expect(canSubmit(session)).toBe(false);
  });
});

describe("drafts", () => {
  it("prefills previous labels so returned tasks keep their work", () => {
    const session = startSession(task(3, ["positive", null, "neutral"]));
    expect(session.labels).toEqual(["positive", null, "neutral"]);
    expect(canSubmit(session)).toBe(false);
    expect(canSubmit(setLabel(session, 1, "negative"))).toBe(true);
  });
});

describe("focus and keyboard", () => {
  it("advances to the next unlabeled step after a selection", () => {
    let session = startSession(task(4));
    session = setLabel(session, 0, "positive");
    expect(session.focus).toBe(1);
    session = setLabel(session, 2, "negative");
    expect(session.focus).toBe(3);
  });

  it("maps 1/2/3 to the three labels at the focused step", () => {
    let session: Session | null = startSession(task(3));
    session = handleKey(session, "1");
    expect(session!.labels[0]).toBe("positive");
    session = handleKey(session!, "2");
    expect(session!.labels[1]).toBe("negative");
    session = handleKey(session!, "3");
    expect(session!.labels[2]).toBe("neutral");
  });

  it("moves focus with j/k and arrows, clamped to the step range", () => {
    let session = startSession(task(3));
    session = handleKey(session, "j")!;
    expect(session.focus).toBe(1);
    session = handleKey(session, "ArrowDown")!;
    expect(session.focus).toBe(2);
    session = handleKey(session, "j")!;
    expect(session.focus).toBe(2);
    session = handleKey(session, "k")!;
    expect(session.focus).toBe(1);
    session = moveFocus(session, -5);
    expect(session.focus).toBe(0);
  });

  it("ignores unrelated keys", () => {
    const session = startSession(task(2));
    expect(handleKey(session, "x")).toBeNull();
  });
});
