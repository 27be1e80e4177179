/**
 * Verification of converted files: an independent schema check whose verdict
 * must agree with the reference loader on any corpus. Diagnostics carry line
 * numbers so a bad file can be fixed by hand.
 */

import { readFileSync } from "node:fs";

import { Diagnostic, validateDatasetText } from "./validate.js";

export interface VerifyResult {
  ok: boolean;
  diagnostics: Diagnostic[];
}

export function verifyText(text: string): VerifyResult {
  const diagnostics = validateDatasetText(text);
  return { ok: diagnostics.length === 0, diagnostics };
}

export class VerifyIOError extends Error {}

export function verifyFile(path: string): VerifyResult {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new VerifyIOError(`missing file: ${path}`);
  }
  return verifyText(text);
}
