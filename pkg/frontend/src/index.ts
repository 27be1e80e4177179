export { parseArchive, loadArchive, ArchiveError, entryCount } from "./archive.js";
export type { Archive, ArchiveEntry, ArchiveStep } from "./archive.js";
export { convertArchive } from "./convert.js";
export type {
  ConversionReport,
  ConversionResult,
  DropLogEntry,
  DropReason,
  ProjectionLogEntry,
} from "./convert.js";
export { dumpDataset, formatCost } from "./format.js";
export { flopCount } from "./flops.js";
export { parseMapping, loadMapping, MappingError } from "./mapping.js";
export type { ConversionMap } from "./mapping.js";
export {
  hardwareProblems,
  kernelProblems,
  recordViolations,
  validateDatasetText,
} from "./validate.js";
export type { Diagnostic } from "./validate.js";
export { verifyText, verifyFile } from "./verify.js";
export type { VerifyResult } from "./verify.js";
export * from "./types.js";
