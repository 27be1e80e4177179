/**
 * TenSet-style measurement archives.
 *
 * An archive is UTF-8 text, one JSON object per line. Line 1 is the header
 * {"archive": "tenset-records", "version": 1}. Every other line is one
 * measurement entry:
 *
 *   {
 *     "workload": {"name": str, "shapes": [[int, ...], ...], "attrs": {str: int}},
 *     "target": str,
 *     "steps": [{"kind": str, ...}, ...],
 *     "costs": [number, ...],
 *     "error": bool,
 *     "network": str
 *   }
 *
 * The last workload shape is the output; the preceding shapes are the
 * inputs. Steps record the schedule's transformations in application order;
 * kinds outside the converter's knob model are projected away (see convert).
 * attrs, error and network are optional.
 */

import { readFileSync } from "node:fs";

import { z } from "zod";

export const ARCHIVE_TAG = "tenset-records";
export const ARCHIVE_VERSION = 1;

export class ArchiveError extends Error {}

const headerSchema = z
  .object({
    archive: z.literal(ARCHIVE_TAG),
    version: z.literal(ARCHIVE_VERSION),
  })
  .strict();

const intField = z.number().int();

const stepSchema = z
  .object({ kind: z.string() })
  .passthrough();

const entrySchema = z
  .object({
    workload: z
      .object({
        name: z.string(),
        shapes: z.array(z.array(intField)).min(1),
        attrs: z.record(intField).optional(),
      })
      .strict(),
    target: z.string(),
    steps: z.array(stepSchema),
    costs: z.array(z.number()),
    error: z.boolean().optional(),
    network: z.string().optional(),
  })
  .strict();

export type ArchiveStep = z.infer<typeof stepSchema>;
export type ArchiveEntry = z.infer<typeof entrySchema>;

export interface ArchiveLine {
  /** 1-based line number in the archive file. */
  line: number;
  entry?: ArchiveEntry;
  /** Set when the line does not parse as an entry. */
  problem?: string;
}

export interface Archive {
  lines: ArchiveLine[];
}

/** Entry count, counting malformed lines (they are entries that fail). */
export function entryCount(archive: Archive): number {
  return archive.lines.length;
}

export function parseArchive(text: string): Archive {
  const lines = text.split(/\r\n|\r|\n/);
  if (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop();
  }
  if (lines.length === 0) {
    throw new ArchiveError("empty file, expected an archive header");
  }
  let header: unknown;
  try {
    header = JSON.parse(lines[0]!);
  } catch {
    throw new ArchiveError("line 1: malformed archive header");
  }
  if (!headerSchema.safeParse(header).success) {
    throw new ArchiveError(
      `line 1: expected header {"archive": "${ARCHIVE_TAG}", "version": ${ARCHIVE_VERSION}}`,
    );
  }

  const out: ArchiveLine[] = [];
  for (let i = 1; i < lines.length; i += 1) {
    const lineno = i + 1;
    let obj: unknown;
    try {
      obj = JSON.parse(lines[i]!);
    } catch {
      out.push({ line: lineno, problem: "not valid JSON" });
      continue;
    }
    const result = entrySchema.safeParse(obj);
    if (!result.success) {
      const issue = result.error.issues[0];
      const path = issue !== undefined ? issue.path.join(".") : "";
      const what = issue !== undefined ? issue.message : "invalid entry";
      out.push({
        line: lineno,
        problem: path.length > 0 ? `${path}: ${what}` : what,
      });
      continue;
    }
    out.push({ line: lineno, entry: result.data });
  }
  return { lines: out };
}

export function loadArchive(path: string): Archive {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new ArchiveError(`missing file: ${path}`);
  }
  return parseArchive(text);
}
