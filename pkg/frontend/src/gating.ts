// Client-side mirror of the conductor's phase gates. The server remains
// authoritative; these flags only keep the UI from emitting illegal POSTs.

import type { Phase } from "./api.js";

export interface Controls {
  submitEnabled: boolean;
  messageEnabled: boolean;
  approvePlanEnabled: boolean;
  approveExecutionEnabled: boolean;
  rejectEnabled: boolean;
  messagePlaceholder: string;
}

export const TERMINAL_PHASES: readonly Phase[] = ["Completed", "Failed", "Rejected"];

export function isTerminal(phase: Phase): boolean {
  return TERMINAL_PHASES.includes(phase);
}

export function controlsFor(phase: Phase | null): Controls {
  const none: Controls = {
    submitEnabled: phase === null || (phase !== null && isTerminal(phase)),
    messageEnabled: false,
    approvePlanEnabled: false,
    approveExecutionEnabled: false,
    rejectEnabled: false,
    messagePlaceholder: "",
  };
  switch (phase) {
    case "AwaitingClarification":
      return {
        ...none,
        messageEnabled: true,
        rejectEnabled: true,
        messagePlaceholder: "Answer the clarification question",
      };
    case "PlanValidation":
      return {
        ...none,
        messageEnabled: true,
        approvePlanEnabled: true,
        rejectEnabled: true,
        messagePlaceholder: "Request a revision (or approve the plan)",
      };
    case "ExecutionApproval":
      return {
        ...none,
        approveExecutionEnabled: true,
        rejectEnabled: true,
      };
    default:
      return none;
  }
}
