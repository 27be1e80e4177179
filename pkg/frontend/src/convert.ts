/**
 * Archive to tensortune.v1 conversion.
 *
 * The dataset schedule model has four knobs: per-axis tile factors, an
 * unroll factor, a vectorize width and (on GPU targets) a two-axis thread
 * binding. Archive schedules are richer, so conversion projects them:
 * recognized step kinds fill the knobs and everything else is dropped from
 * the schedule and logged per record. Entries that cannot be represented at
 * all are dropped with a reason, never silently.
 */

import { z } from "zod";

import { Archive, ArchiveEntry, ArchiveStep } from "./archive.js";
import { dumpDataset } from "./format.js";
import { flopCount } from "./flops.js";
import { ConversionMap } from "./mapping.js";
import { kernelProblems, recordViolations } from "./validate.js";
import {
  DatasetRows,
  HardwareParams,
  Kernel,
  MeasurementRecord,
  ScheduleConfig,
  Task,
} from "./types.js";

export type DropReason =
  | "malformed-entry"
  | "unknown-op"
  | "unknown-target"
  | "invalid-kernel"
  | "invalid-schedule"
  | "bad-measurement";

export interface DropLogEntry {
  line: number;
  reason: DropReason;
  detail: string;
}

export interface ProjectionLogEntry {
  line: number;
  record_id: string;
  step_kind: string;
  reason: "outside-knob-model" | "bind-on-cpu";
}

export interface ConversionReport {
  entry_count: number;
  emitted: number;
  dropped: number;
  dropped_by_reason: Record<string, number>;
  drops: DropLogEntry[];
  projections: ProjectionLogEntry[];
  hardware_count: number;
  task_count: number;
}

export interface ConversionResult {
  text: string;
  report: ConversionReport;
}

const splitStep = z
  .object({ kind: z.literal("split"), axis: z.number().int(), factors: z.array(z.number().int()) })
  .strict();
const vectorizeStep = z
  .object({ kind: z.literal("vectorize"), width: z.number().int() })
  .strict();
const unrollStep = z
  .object({ kind: z.literal("unroll"), factor: z.number().int() })
  .strict();
const bindStep = z
  .object({ kind: z.literal("bind"), threads: z.array(z.number().int()).length(2) })
  .strict();

export function convertArchive(
  archive: Archive,
  mapping: ConversionMap,
): ConversionResult {
  const rows: DatasetRows = { hardware: [], tasks: [], records: [] };
  const emittedTargets = new Set<string>();
  const emittedTasks = new Set<string>();
  const taskByKey = new Map<string, Task>();
  const drops: DropLogEntry[] = [];
  const projections: ProjectionLogEntry[] = [];

  for (const archiveLine of archive.lines) {
    const { line } = archiveLine;
    if (archiveLine.problem !== undefined) {
      drops.push({ line, reason: "malformed-entry", detail: archiveLine.problem });
      continue;
    }
    const entry = archiveLine.entry!;

    const op = mapping.operators.get(entry.workload.name);
    if (op === undefined) {
      drops.push({
        line,
        reason: "unknown-op",
        detail: `no operator mapping for ${JSON.stringify(entry.workload.name)}`,
      });
      continue;
    }
    const hw = mapping.targets.get(entry.target);
    if (hw === undefined) {
      drops.push({
        line,
        reason: "unknown-target",
        detail: `no target mapping for ${JSON.stringify(entry.target)}`,
      });
      continue;
    }

    const kernel = buildKernel(op, entry);
    const kernelIssues = kernelProblems(kernel);
    if (kernelIssues.length > 0) {
      drops.push({ line, reason: "invalid-kernel", detail: kernelIssues.join(", ") });
      continue;
    }
    const flops = flopCount(kernel);
    if (flops.count === undefined || flops.count > BigInt(Number.MAX_SAFE_INTEGER)) {
      drops.push({
        line,
        reason: "invalid-kernel",
        detail: flops.error ?? "flop count exceeds the converter's exact integer range",
      });
      continue;
    }

    const recordId = `r-${String(line).padStart(5, "0")}`;
    const projected = projectSchedule(
      entry.steps,
      kernel.output_shape.length,
      hw.hardware_class,
      line,
      recordId,
    );
    if (projected.problem !== undefined) {
      drops.push({ line, reason: "invalid-schedule", detail: projected.problem });
      continue;
    }

    const rec: MeasurementRecord = {
      record_id: recordId,
      task_id: taskIdFor(kernel, hw),
      schedule: projected.schedule!,
      measured_flops: Number(flops.count),
      error_flag: entry.error ?? false,
    };
    if (!rec.error_flag) {
      const cost = meanCost(entry.costs);
      if (cost === undefined) {
        drops.push({
          line,
          reason: "bad-measurement",
          detail: "costs must be a non-empty list of positive finite seconds",
        });
        continue;
      }
      rec.mean_cost = cost;
    }

    const task = ensureTask(kernel, hw, entry, taskByKey);
    const violations = recordViolations(rec, task, hw.hardware_class);
    if (violations.length > 0) {
      drops.push({ line, reason: "invalid-schedule", detail: violations.join(", ") });
      continue;
    }

    // The entry is representable; materialize its entities in first-use order.
    if (!emittedTargets.has(hw.target_id)) {
      emittedTargets.add(hw.target_id);
      rows.hardware.push(hw);
    }
    if (!emittedTasks.has(task.task_id)) {
      emittedTasks.add(task.task_id);
      rows.tasks.push(task);
    }
    rows.records.push(rec);
    projections.push(...projected.log!);
  }

  const report = buildReport(archive.lines.length, rows, drops, projections);
  if (report.emitted + report.dropped !== report.entry_count) {
    throw new Error("internal: emitted + dropped != entry count");
  }
  return { text: dumpDataset(rows), report };
}

function buildKernel(op: string, entry: ArchiveEntry): Kernel {
  const shapes = entry.workload.shapes;
  const inputs = shapes.slice(0, -1);
  const output = shapes[shapes.length - 1]!;
  const attrs = entry.workload.attrs ?? {};
  const attrSuffix = Object.keys(attrs)
    .sort()
    .map((k) => `-${k}=${attrs[k]}`)
    .join("");
  const kernelId =
    `${op}-` + shapes.map((s) => s.join("x")).join("-") + attrSuffix;
  return {
    kernel_id: kernelId,
    op,
    input_shapes: inputs,
    output_shape: output,
    attributes: attrs,
  };
}

function taskIdFor(kernel: Kernel, hw: HardwareParams): string {
  return `t-${kernel.kernel_id}@${hw.target_id}`;
}

function ensureTask(
  kernel: Kernel,
  hw: HardwareParams,
  entry: ArchiveEntry,
  taskByKey: Map<string, Task>,
): Task {
  const key = taskIdFor(kernel, hw);
  const existing = taskByKey.get(key);
  if (existing !== undefined) {
    return existing;
  }
  // The first entry for a (kernel, target) pair names the task's network.
  const task: Task = {
    task_id: key,
    kernel,
    target: hw.target_id,
    network_tag: entry.network ?? "",
  };
  taskByKey.set(key, task);
  return task;
}

interface ProjectedSchedule {
  schedule?: ScheduleConfig;
  log?: ProjectionLogEntry[];
  problem?: string;
}

function projectSchedule(
  steps: ArchiveStep[],
  rank: number,
  hardwareClass: string,
  line: number,
  recordId: string,
): ProjectedSchedule {
  const tiles: number[][] = Array.from({ length: rank }, () => []);
  let unroll = 1;
  let vectorize = 1;
  let binding: [number, number] | undefined;
  const log: ProjectionLogEntry[] = [];

  for (const step of steps) {
    switch (step.kind) {
      case "split": {
        const parsed = splitStep.safeParse(step);
        if (!parsed.success) {
          return { problem: "malformed split step" };
        }
        const { axis, factors } = parsed.data;
        if (axis < 0 || axis >= rank) {
          return { problem: `split axis ${axis} outside output rank ${rank}` };
        }
        // Re-splitting an axis nests: its factor list grows.
        tiles[axis]!.push(...factors);
        break;
      }
      case "vectorize": {
        const parsed = vectorizeStep.safeParse(step);
        if (!parsed.success) {
          return { problem: "malformed vectorize step" };
        }
        vectorize = parsed.data.width;
        break;
      }
      case "unroll": {
        const parsed = unrollStep.safeParse(step);
        if (!parsed.success) {
          return { problem: "malformed unroll step" };
        }
        unroll = parsed.data.factor;
        break;
      }
      case "bind": {
        const parsed = bindStep.safeParse(step);
        if (!parsed.success) {
          return { problem: "malformed bind step" };
        }
        if (hardwareClass === "CPU") {
          log.push({
            line,
            record_id: recordId,
            step_kind: "bind",
            reason: "bind-on-cpu",
          });
          break;
        }
        binding = parsed.data.threads as [number, number];
        break;
      }
      default:
        log.push({
          line,
          record_id: recordId,
          step_kind: step.kind,
          reason: "outside-knob-model",
        });
    }
  }

  const schedule: ScheduleConfig = {
    tile_factors: tiles,
    unroll_factor: unroll,
    vectorize_width: vectorize,
  };
  if (binding !== undefined) {
    schedule.thread_binding = binding;
  }
  return { schedule, log };
}

function meanCost(costs: number[]): number | undefined {
  if (costs.length === 0) {
    return undefined;
  }
  if (costs.some((c) => !Number.isFinite(c) || c <= 0)) {
    return undefined;
  }
  const sum = costs.reduce((a, b) => a + b, 0);
  return sum / costs.length;
}

function buildReport(
  entryCount: number,
  rows: DatasetRows,
  drops: DropLogEntry[],
  projections: ProjectionLogEntry[],
): ConversionReport {
  const byReason: Record<string, number> = {};
  for (const drop of drops) {
    byReason[drop.reason] = (byReason[drop.reason] ?? 0) + 1;
  }
  return {
    entry_count: entryCount,
    emitted: rows.records.length,
    dropped: drops.length,
    dropped_by_reason: Object.fromEntries(
      Object.entries(byReason).sort(([a], [b]) => (a < b ? -1 : 1)),
    ),
    drops,
    projections,
    hardware_count: rows.hardware.length,
    task_count: rows.tasks.length,
  };
}
