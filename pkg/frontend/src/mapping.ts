/**
 * Conversion maps: how archive vocabulary translates into dataset entities.
 *
 * A mapping file is a single JSON object with two tables:
 *
 *   {
 *     "operators": { "<archive task name>": "<operator kind>", ... },
 *     "targets":   { "<archive target string>": { <hardware params> }, ... }
 *   }
 *
 * Operator values must name known operator kinds; target values are complete
 * hardware descriptions (target_id, hardware_class and the class's numeric
 * parameters). Archive internals vary between exports, so everything
 * export-specific lives here rather than in code.
 */

import { readFileSync } from "node:fs";

import { z } from "zod";

import { hardwareProblems } from "./validate.js";
import { HardwareParams, OPERATOR_REGISTRY } from "./types.js";

export class MappingError extends Error {}

const intField = z.number().int();

const targetSchema = z
  .object({
    target_id: z.string().min(1),
    hardware_class: z.enum(["CPU", "GPU"]),
    cache_line_bytes: intField.optional(),
    max_local_memory_per_block: intField.optional(),
    max_shared_memory_per_block: intField.optional(),
    max_threads_per_block: intField.optional(),
    max_vthread_extent: intField.optional(),
    num_cores: intField.optional(),
    vector_unit_bytes: intField.optional(),
    warp_size: intField.optional(),
  })
  .strict();

const mappingSchema = z
  .object({
    operators: z.record(z.string()),
    targets: z.record(targetSchema),
  })
  .strict();

export interface ConversionMap {
  operators: ReadonlyMap<string, string>;
  targets: ReadonlyMap<string, HardwareParams>;
}

export function parseMapping(text: string): ConversionMap {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (exc) {
    throw new MappingError(
      `mapping is not valid JSON: ${exc instanceof Error ? exc.message : exc}`,
    );
  }
  const result = mappingSchema.safeParse(raw);
  if (!result.success) {
    const issue = result.error.issues[0];
    const where = issue !== undefined ? issue.path.join(".") : "";
    const what = issue !== undefined ? issue.message : "invalid mapping";
    throw new MappingError(
      where.length > 0 ? `mapping ${where}: ${what}` : `mapping: ${what}`,
    );
  }
  const { operators, targets } = result.data;
  if (Object.keys(operators).length === 0) {
    throw new MappingError("mapping has an empty operator table");
  }
  if (Object.keys(targets).length === 0) {
    throw new MappingError("mapping has an empty target table");
  }

  for (const [name, op] of Object.entries(operators)) {
    if (!(OPERATOR_REGISTRY as readonly string[]).includes(op)) {
      throw new MappingError(
        `mapping operators.${name}: unknown operator kind ${JSON.stringify(op)}`,
      );
    }
  }
  const seenIds = new Set<string>();
  for (const [key, hw] of Object.entries(targets)) {
    const problems = hardwareProblems(hw as HardwareParams);
    if (problems.length > 0) {
      throw new MappingError(`mapping targets.${key}: ${problems[0]}`);
    }
    if (seenIds.has(hw.target_id)) {
      throw new MappingError(
        `mapping targets: duplicate target_id ${JSON.stringify(hw.target_id)}`,
      );
    }
    seenIds.add(hw.target_id);
  }

  return {
    operators: new Map(Object.entries(operators)),
    targets: new Map(
      Object.entries(targets) as [string, HardwareParams][],
    ),
  };
}

export function loadMapping(path: string): ConversionMap {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new MappingError(`missing file: ${path}`);
  }
  return parseMapping(text);
}
