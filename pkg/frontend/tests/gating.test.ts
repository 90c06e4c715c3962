import { describe, expect, it } from "vitest";

import type { Phase } from "../src/api.js";
import { controlsFor, isTerminal } from "../src/gating.js";

const ALL_PHASES: Phase[] = [
  "Routing",
  "Planning",
  "AwaitingClarification",
  "PlanValidation",
  "Provisioning",
  "DeferredGeneration",
  "ExecutionApproval",
  "Executing",
  "Completed",
  "Failed",
  "Rejected",
];

describe("phase gating", () => {
  it("enables approve-plan only in PlanValidation", () => {
    for (const phase of ALL_PHASES) {
      expect(controlsFor(phase).approvePlanEnabled).toBe(phase === "PlanValidation");
    }
  });

  it("enables approve-execution only in ExecutionApproval", () => {
    for (const phase of ALL_PHASES) {
      expect(controlsFor(phase).approveExecutionEnabled).toBe(phase === "ExecutionApproval");
    }
  });

  it("enables reject only at the three human gates", () => {
    const gates = new Set<Phase>(["AwaitingClarification", "PlanValidation", "ExecutionApproval"]);
    for (const phase of ALL_PHASES) {
      expect(controlsFor(phase).rejectEnabled).toBe(gates.has(phase));
    }
  });

  it("enables the message box for clarifications and revisions", () => {
    expect(controlsFor("AwaitingClarification").messageEnabled).toBe(true);
    expect(controlsFor("PlanValidation").messageEnabled).toBe(true);
    expect(controlsFor("Executing").messageEnabled).toBe(false);
    expect(controlsFor("Completed").messageEnabled).toBe(false);
  });

  it("allows a new query only before a session or after a terminal phase", () => {
    expect(controlsFor(null).submitEnabled).toBe(true);
    expect(controlsFor("Completed").submitEnabled).toBe(true);
    expect(controlsFor("Rejected").submitEnabled).toBe(true);
    expect(controlsFor("Executing").submitEnabled).toBe(false);
    expect(controlsFor("PlanValidation").submitEnabled).toBe(false);
  });

  it("marks exactly the three terminal phases", () => {
    expect(ALL_PHASES.filter(isTerminal)).toEqual(["Completed", "Failed", "Rejected"]);
  });
});
