/**
 * Independent validation of tensortune.v1 files.
 *
 * This is a from-scratch re-implementation of the dataset schema, kept
 * deliberately separate from the reference loader so the two can be compared
 * on a corpus. Verdicts must agree with the reference loader; message text
 * is free to differ.
 */

import { z } from "zod";

import { flopCount } from "./flops.js";
import {
  CLASS_FIELDS,
  CONV_OPS,
  ELEMENTWISE_BINARY,
  ELEMENTWISE_UNARY,
  FORMAT_TAG,
  HARDWARE_PARAM_FIELDS,
  HardwareClass,
  HardwareParams,
  Kernel,
  MAX_SHAPE_DIMS,
  MAX_TILE_SLOTS,
  MeasurementRecord,
  OPERATOR_REGISTRY,
  ScheduleConfig,
  Task,
} from "./types.js";

export interface Diagnostic {
  line: number;
  message: string;
}

const headerSchema = z.object({ format: z.literal(FORMAT_TAG) }).strict();

const intField = z.number().int();

const hardwareSchema = z
  .object({
    type: z.literal("hardware"),
    target_id: z.string(),
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

const kernelSchema = z
  .object({
    kernel_id: z.string(),
    op: z.string(),
    input_shapes: z.array(z.array(intField)),
    output_shape: z.array(intField),
    attributes: z.record(intField).optional(),
  })
  .strict();

const taskSchema = z
  .object({
    type: z.literal("task"),
    task_id: z.string(),
    kernel: kernelSchema,
    target: z.string(),
    network_tag: z.string().optional(),
  })
  .strict();

const scheduleSchema = z
  .object({
    tile_factors: z.array(z.array(intField)),
    unroll_factor: intField.optional(),
    vectorize_width: intField.optional(),
    thread_binding: z.array(intField).length(2).nullable().optional(),
  })
  .strict();

const recordSchema = z
  .object({
    type: z.literal("record"),
    record_id: z.string(),
    task_id: z.string(),
    schedule: scheduleSchema,
    mean_cost: z.number().nullable().optional(),
    measured_flops: intField,
    error_flag: z.boolean().optional(),
  })
  .strict();

function zodMessage(error: z.ZodError): string {
  const issue = error.issues[0];
  if (issue === undefined) {
    return "invalid object";
  }
  const path = issue.path.join(".");
  return path.length > 0 ? `${path}: ${issue.message}` : issue.message;
}

/** Rule checks for one hardware entry; empty result means valid. */
export function hardwareProblems(hw: HardwareParams): string[] {
  const problems: string[] = [];
  if (hw.target_id.length === 0) {
    problems.push("empty target_id");
  }
  const applicable = new Set(CLASS_FIELDS[hw.hardware_class as HardwareClass]);
  for (const name of HARDWARE_PARAM_FIELDS) {
    const value = hw[name];
    if (applicable.has(name)) {
      if (value === undefined) {
        problems.push(`missing ${name}`);
      } else if (value <= 0) {
        problems.push(`${name} must be positive, got ${value}`);
      }
    } else if (value !== undefined) {
      problems.push(`${name} does not apply to ${hw.hardware_class} targets`);
    }
  }
  return problems;
}

/** Rule checks for one kernel; empty result means valid. */
export function kernelProblems(kernel: Kernel): string[] {
  const problems: string[] = [];
  if (kernel.kernel_id.length === 0) {
    problems.push("empty kernel_id");
  }
  if (!(OPERATOR_REGISTRY as readonly string[]).includes(kernel.op)) {
    problems.push(`unknown operator ${JSON.stringify(kernel.op)}`);
    return problems;
  }
  for (const shape of [...kernel.input_shapes, kernel.output_shape]) {
    if (shape.length === 0) {
      problems.push("empty shape");
    }
    if (shape.length > MAX_SHAPE_DIMS) {
      problems.push(`shapes are capped at ${MAX_SHAPE_DIMS} dims`);
    }
    for (const dim of shape) {
      if (dim < 1) {
        problems.push(`dimension ${dim} < 1`);
      }
    }
  }
  if (problems.length > 0) {
    return problems;
  }

  const op = kernel.op;
  const out = kernel.output_shape;
  if (ELEMENTWISE_UNARY.has(op)) {
    if (kernel.input_shapes.length !== 1) {
      problems.push(`${op} takes exactly one input`);
    } else if (!shapesEqual(kernel.input_shapes[0]!, out)) {
      problems.push(`${op} input shape must match output`);
    }
  } else if (ELEMENTWISE_BINARY.has(op)) {
    if (kernel.input_shapes.length < 1 || kernel.input_shapes.length > 2) {
      problems.push(`${op} takes one or two inputs`);
    } else if (kernel.input_shapes.some((s) => !shapesEqual(s, out))) {
      problems.push(`${op} input shapes must match output`);
    }
  } else if (op === "matmul") {
    problems.push(...matmulProblems(kernel));
  } else if (CONV_OPS.has(op)) {
    problems.push(...convProblems(kernel));
  }
  if (problems.length > 0) {
    return problems;
  }

  const flops = flopCount(kernel);
  if (flops.error !== undefined) {
    problems.push(flops.error);
  }
  return problems;
}

function matmulProblems(kernel: Kernel): string[] {
  if (kernel.input_shapes.length !== 2) {
    return ["matmul takes exactly two inputs"];
  }
  const [a, b] = kernel.input_shapes as [number[], number[]];
  const out = kernel.output_shape;
  if (a.length !== 2 || b.length !== 2 || out.length !== 2) {
    return ["matmul shapes must be rank 2"];
  }
  if (a[1] !== b[0] || out[0] !== a[0] || out[1] !== b[1]) {
    return ["inconsistent matmul shapes"];
  }
  return [];
}

function convProblems(kernel: Kernel): string[] {
  if (kernel.input_shapes.length !== 2) {
    return [`${kernel.op} takes data and weight inputs`];
  }
  const [data, weight] = kernel.input_shapes as [number[], number[]];
  const out = kernel.output_shape;
  if (data.length !== 4 || weight.length !== 4 || out.length !== 4) {
    return [`${kernel.op} shapes must be rank 4 (NHWC)`];
  }
  const stride = kernel.attributes["stride"] ?? 1;
  const padding = kernel.attributes["padding"] ?? 0;
  if (stride < 1 || padding < 0) {
    return [`bad stride/padding (${stride}, ${padding})`];
  }
  const [n, h, w, cIn] = data as [number, number, number, number];
  const [kH, kW, wCin, cOut] = weight as [number, number, number, number];
  if (wCin !== cIn) {
    return [`weight C_in ${wCin} != data C_in ${cIn}`];
  }
  const hOut = Math.floor((h + 2 * padding - kH) / stride) + 1;
  const wOut = Math.floor((w + 2 * padding - kW) / stride) + 1;
  if (hOut < 1 || wOut < 1) {
    return ["filter does not fit the padded input"];
  }
  if (!shapesEqual(out, [n, hOut, wOut, cOut])) {
    return [`output shape inconsistent with (${n}, ${hOut}, ${wOut}, ${cOut})`];
  }
  return [];
}

function shapesEqual(a: readonly number[], b: readonly number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

/**
 * Violation codes for one record against its task and hardware context.
 * Mirrors the reference loader's per-record checks code for code.
 */
export function recordViolations(
  rec: MeasurementRecord,
  task: Task | undefined,
  hardwareClass: HardwareClass | undefined,
): string[] {
  const violations: string[] = [];
  if (task === undefined) {
    violations.push(`dangling-task:${rec.task_id}`);
  }
  if (rec.error_flag) {
    if (rec.mean_cost !== undefined) {
      violations.push("cost-on-error");
    }
  } else if (rec.mean_cost === undefined) {
    violations.push("missing-cost");
  } else if (!Number.isFinite(rec.mean_cost) || rec.mean_cost <= 0) {
    violations.push("non-positive-cost");
  }
  if (rec.measured_flops < 0) {
    violations.push("negative-flops");
  }

  const sched = rec.schedule;
  if (sched.unroll_factor < 1) {
    violations.push("bad-unroll-factor");
  }
  if (sched.vectorize_width < 1) {
    violations.push("bad-vectorize-width");
  }
  let totalSlots = 0;
  for (const factors of sched.tile_factors) {
    totalSlots += factors.length;
    if (factors.some((f) => f < 1)) {
      violations.push("bad-tile-factor");
    }
  }
  if (totalSlots > MAX_TILE_SLOTS) {
    violations.push("tile-slots-exceeded");
  }
  if (sched.thread_binding !== undefined) {
    const [tx, ty] = sched.thread_binding;
    if (tx < 1 || ty < 1) {
      violations.push("bad-thread-binding");
    }
  }

  if (task !== undefined) {
    const extents = task.kernel.output_shape;
    if (sched.tile_factors.length !== extents.length) {
      violations.push("tile-axes-mismatch");
    } else {
      for (let axis = 0; axis < extents.length; axis += 1) {
        const factors = sched.tile_factors[axis]!;
        const prod = factors.reduce((p, f) => p * Math.max(f, 1), 1);
        if (extents[axis]! % prod !== 0) {
          violations.push("tile-divisibility");
          break;
        }
      }
    }
    if (hardwareClass === "CPU" && sched.thread_binding !== undefined) {
      violations.push("gpu-binding-on-cpu");
    }
  }
  return violations;
}

interface ParsedLines {
  hardware: { line: number; value: HardwareParams }[];
  tasks: { line: number; value: Task }[];
  records: { line: number; value: MeasurementRecord }[];
}

/**
 * Validate a complete dataset text. Returns all diagnostics found; an empty
 * list means the file is valid. Unlike the reference loader, which raises at
 * the first problem, every line is inspected.
 */
export function validateDatasetText(text: string): Diagnostic[] {
  const diagnostics: Diagnostic[] = [];
  const lines = splitLines(text);
  if (lines.length === 0) {
    return [{ line: 1, message: "missing format header" }];
  }

  const header = parseJson(lines[0]!);
  if (header.error !== undefined) {
    diagnostics.push({ line: 1, message: `malformed header: ${header.error}` });
  } else if (!headerSchema.safeParse(header.value).success) {
    diagnostics.push({
      line: 1,
      message: `expected format header {"format": "${FORMAT_TAG}"}`,
    });
  }

  const parsed: ParsedLines = { hardware: [], tasks: [], records: [] };
  for (let i = 1; i < lines.length; i += 1) {
    const lineno = i + 1;
    const raw = lines[i]!;
    if (raw.trim().length === 0) {
      diagnostics.push({ line: lineno, message: "blank line" });
      continue;
    }
    const result = parseJson(raw);
    if (result.error !== undefined) {
      diagnostics.push({
        line: lineno,
        message: `malformed line: ${result.error}`,
      });
      continue;
    }
    const obj = result.value;
    if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
      diagnostics.push({ line: lineno, message: "object without a type field" });
      continue;
    }
    const kind = (obj as Record<string, unknown>)["type"];
    if (kind === undefined) {
      diagnostics.push({ line: lineno, message: "object without a type field" });
      continue;
    }
    diagnostics.push(...parseEntity(lineno, kind, obj, parsed));
  }

  diagnostics.push(...crossEntityDiagnostics(parsed));
  diagnostics.sort((a, b) => a.line - b.line);
  return diagnostics;
}

function parseEntity(
  lineno: number,
  kind: unknown,
  obj: unknown,
  parsed: ParsedLines,
): Diagnostic[] {
  if (kind === "hardware") {
    const result = hardwareSchema.safeParse(obj);
    if (!result.success) {
      return [{ line: lineno, message: zodMessage(result.error) }];
    }
    const { type: _type, ...hw } = result.data;
    const problems = hardwareProblems(hw as HardwareParams);
    if (problems.length > 0) {
      return problems.map((message) => ({ line: lineno, message }));
    }
    parsed.hardware.push({ line: lineno, value: hw as HardwareParams });
    return [];
  }
  if (kind === "task") {
    const result = taskSchema.safeParse(obj);
    if (!result.success) {
      return [{ line: lineno, message: zodMessage(result.error) }];
    }
    const task: Task = {
      task_id: result.data.task_id,
      kernel: {
        kernel_id: result.data.kernel.kernel_id,
        op: result.data.kernel.op,
        input_shapes: result.data.kernel.input_shapes,
        output_shape: result.data.kernel.output_shape,
        attributes: result.data.kernel.attributes ?? {},
      },
      target: result.data.target,
      network_tag: result.data.network_tag ?? "",
    };
    const problems = kernelProblems(task.kernel);
    if (problems.length > 0) {
      return problems.map((message) => ({
        line: lineno,
        message: `kernel ${JSON.stringify(task.kernel.kernel_id)}: ${message}`,
      }));
    }
    parsed.tasks.push({ line: lineno, value: task });
    return [];
  }
  if (kind === "record") {
    const result = recordSchema.safeParse(obj);
    if (!result.success) {
      return [{ line: lineno, message: zodMessage(result.error) }];
    }
    const data = result.data;
    const schedule: ScheduleConfig = {
      tile_factors: data.schedule.tile_factors,
      unroll_factor: data.schedule.unroll_factor ?? 1,
      vectorize_width: data.schedule.vectorize_width ?? 1,
    };
    if (
      data.schedule.thread_binding !== undefined &&
      data.schedule.thread_binding !== null
    ) {
      schedule.thread_binding = data.schedule.thread_binding as [
        number,
        number,
      ];
    }
    const rec: MeasurementRecord = {
      record_id: data.record_id,
      task_id: data.task_id,
      schedule,
      measured_flops: data.measured_flops,
      error_flag: data.error_flag ?? false,
    };
    if (data.mean_cost !== undefined && data.mean_cost !== null) {
      rec.mean_cost = data.mean_cost;
    }
    parsed.records.push({ line: lineno, value: rec });
    return [];
  }
  return [
    { line: lineno, message: `unknown line type ${JSON.stringify(kind)}` },
  ];
}

function crossEntityDiagnostics(parsed: ParsedLines): Diagnostic[] {
  const diagnostics: Diagnostic[] = [];

  const hardwareById = new Map<string, HardwareParams>();
  for (const { line, value } of parsed.hardware) {
    if (hardwareById.has(value.target_id)) {
      diagnostics.push({
        line,
        message: `duplicate target_id ${JSON.stringify(value.target_id)}`,
      });
    } else {
      hardwareById.set(value.target_id, value);
    }
  }

  const taskById = new Map<string, Task>();
  const kernelTargetPairs = new Set<string>();
  for (const { line, value } of parsed.tasks) {
    if (taskById.has(value.task_id)) {
      diagnostics.push({
        line,
        message: `duplicate task_id ${JSON.stringify(value.task_id)}`,
      });
      continue;
    }
    taskById.set(value.task_id, value);
    if (!hardwareById.has(value.target)) {
      diagnostics.push({
        line,
        message: `task ${JSON.stringify(value.task_id)}: dangling target ${JSON.stringify(value.target)}`,
      });
    }
    const pair = JSON.stringify([value.kernel.kernel_id, value.target]);
    if (kernelTargetPairs.has(pair)) {
      diagnostics.push({
        line,
        message: `task ${JSON.stringify(value.task_id)}: duplicate (kernel, target) pair ${pair}`,
      });
    }
    kernelTargetPairs.add(pair);
  }

  const recordIds = new Set<string>();
  for (const { line, value } of parsed.records) {
    if (recordIds.has(value.record_id)) {
      diagnostics.push({
        line,
        message: `duplicate record_id ${JSON.stringify(value.record_id)}`,
      });
      continue;
    }
    recordIds.add(value.record_id);
    const task = taskById.get(value.task_id);
    const hwClass =
      task === undefined
        ? undefined
        : hardwareById.get(task.target)?.hardware_class;
    const violations = recordViolations(value, task, hwClass);
    if (violations.length > 0) {
      diagnostics.push({
        line,
        message: `record ${JSON.stringify(value.record_id)}: ${violations.join(", ")}`,
      });
    }
  }
  return diagnostics;
}

function splitLines(text: string): string[] {
  const lines = text.split(/\r\n|\r|\n/);
  // A trailing newline produces one empty tail element, which is not a line.
  if (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop();
  }
  return lines;
}

function parseJson(
  raw: string,
): { value: unknown; error?: undefined } | { error: string; value?: undefined } {
  try {
    return { value: JSON.parse(raw) };
  } catch (exc) {
    return { error: exc instanceof Error ? exc.message : String(exc) };
  }
}
