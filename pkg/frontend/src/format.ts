/**
 * tensortune.v1 emission.
 *
 * Costs are decimal seconds and must carry at least nine significant digits
 * so they round-trip exactly; everything else is plain JSON, one object per
 * line, with a format header on line 1. Key order is fixed so conversion is
 * byte-reproducible.
 */

import {
  DatasetRows,
  FORMAT_TAG,
  HARDWARE_PARAM_FIELDS,
  HardwareParams,
  MeasurementRecord,
  Task,
} from "./types.js";

const COST_SENTINEL = "@@MEAN-COST-SENTINEL@@";

function significantDigits(text: string): number {
  const mantissa = text.split(/[eE]/)[0] ?? "";
  const digits = mantissa.replace(/[^0-9]/g, "").replace(/^0+/, "");
  return digits.length;
}

/**
 * Decimal text for a cost with >= 9 significant digits and exact round-trip.
 *
 * The shortest round-trip form is used when it already carries enough
 * digits; otherwise the value is exactly representable with few digits and a
 * zero-padded scientific form keeps both properties.
 */
export function formatCost(value: number): string {
  const text = String(value);
  if (significantDigits(text) >= 9) {
    return text;
  }
  return value.toExponential(8);
}

export function hardwareLine(hw: HardwareParams): string {
  const out: Record<string, unknown> = {
    type: "hardware",
    target_id: hw.target_id,
    hardware_class: hw.hardware_class,
  };
  for (const name of HARDWARE_PARAM_FIELDS) {
    const value = hw[name];
    if (value !== undefined) {
      out[name] = value;
    }
  }
  return JSON.stringify(out);
}

export function taskLine(task: Task): string {
  return JSON.stringify({
    type: "task",
    task_id: task.task_id,
    kernel: {
      kernel_id: task.kernel.kernel_id,
      op: task.kernel.op,
      input_shapes: task.kernel.input_shapes,
      output_shape: task.kernel.output_shape,
      attributes: task.kernel.attributes,
    },
    target: task.target,
    network_tag: task.network_tag,
  });
}

export function recordLine(rec: MeasurementRecord): string {
  const out: Record<string, unknown> = {
    type: "record",
    record_id: rec.record_id,
    task_id: rec.task_id,
    schedule: scheduleJson(rec),
    measured_flops: rec.measured_flops,
    error_flag: rec.error_flag,
  };
  if (rec.error_flag || rec.mean_cost === undefined) {
    return JSON.stringify(out);
  }
  // JSON.stringify cannot be told a per-field number format, so the cost is
  // stood in for by a sentinel and spliced in at full precision.
  out.mean_cost = COST_SENTINEL;
  const line = JSON.stringify(out);
  const quoted = `"${COST_SENTINEL}"`;
  if (line.split(quoted).length !== 2) {
    throw new Error(
      `record ${rec.record_id}: cannot serialize, sentinel collision`,
    );
  }
  return line.replace(quoted, formatCost(rec.mean_cost));
}

function scheduleJson(rec: MeasurementRecord): Record<string, unknown> {
  const sched: Record<string, unknown> = {
    tile_factors: rec.schedule.tile_factors,
    unroll_factor: rec.schedule.unroll_factor,
    vectorize_width: rec.schedule.vectorize_width,
  };
  if (rec.schedule.thread_binding !== undefined) {
    sched.thread_binding = rec.schedule.thread_binding;
  }
  return sched;
}

export function dumpDataset(rows: DatasetRows): string {
  const lines = [JSON.stringify({ format: FORMAT_TAG })];
  for (const hw of rows.hardware) {
    lines.push(hardwareLine(hw));
  }
  for (const task of rows.tasks) {
    lines.push(taskLine(task));
  }
  for (const rec of rows.records) {
    lines.push(recordLine(rec));
  }
  return lines.join("\n") + "\n";
}
