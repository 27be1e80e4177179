/**
 * Shapes shared across the converter and verifier.
 *
 * These mirror the tensortune.v1 entity kinds: hardware targets, tasks
 * (a kernel pinned to a target) and measurement records (a schedule tried on
 * a task). Field names match the on-disk JSON exactly.
 */

export const FORMAT_TAG = "tensortune.v1";

export const OPERATOR_REGISTRY = [
  "elementwise-add",
  "elementwise-multiply",
  "elementwise-divide",
  "relu",
  "tanh",
  "fast-tanh",
  "softmax-norm",
  "matmul",
  "conv2d",
  "conv2d-winograd",
] as const;

export type TensorOpKind = (typeof OPERATOR_REGISTRY)[number];

export const ELEMENTWISE_UNARY: ReadonlySet<string> = new Set([
  "relu",
  "tanh",
  "fast-tanh",
  "softmax-norm",
]);

export const ELEMENTWISE_BINARY: ReadonlySet<string> = new Set([
  "elementwise-add",
  "elementwise-multiply",
  "elementwise-divide",
]);

export const CONV_OPS: ReadonlySet<string> = new Set([
  "conv2d",
  "conv2d-winograd",
]);

/** Per-element cost charged by the flop model for elementwise operators. */
export const ELEMENTWISE_OP_COST: Readonly<Record<string, bigint>> = {
  "elementwise-add": 1n,
  "elementwise-multiply": 1n,
  "elementwise-divide": 1n,
  relu: 1n,
  tanh: 4n,
  "fast-tanh": 4n,
  "softmax-norm": 5n,
};

/** Modeling caps shared with the dataset format. */
export const MAX_SHAPE_DIMS = 6;
export const MAX_TILE_SLOTS = 8;
export const FLOP_LIMIT = 2n ** 63n;

export const HARDWARE_CLASSES = ["CPU", "GPU"] as const;
export type HardwareClass = (typeof HARDWARE_CLASSES)[number];

/** Parameter fields that apply to each hardware class. */
export const CLASS_FIELDS: Readonly<Record<HardwareClass, readonly string[]>> =
  {
    CPU: ["cache_line_bytes", "num_cores", "vector_unit_bytes"],
    GPU: [
      "cache_line_bytes",
      "max_local_memory_per_block",
      "max_shared_memory_per_block",
      "max_threads_per_block",
      "max_vthread_extent",
      "vector_unit_bytes",
      "warp_size",
    ],
  };

/** All optional parameter field names, in the canonical slot order. */
export const HARDWARE_PARAM_FIELDS = [
  "cache_line_bytes",
  "max_local_memory_per_block",
  "max_shared_memory_per_block",
  "max_threads_per_block",
  "max_vthread_extent",
  "num_cores",
  "vector_unit_bytes",
  "warp_size",
] as const;

export interface HardwareParams {
  target_id: string;
  hardware_class: HardwareClass;
  cache_line_bytes?: number;
  max_local_memory_per_block?: number;
  max_shared_memory_per_block?: number;
  max_threads_per_block?: number;
  max_vthread_extent?: number;
  num_cores?: number;
  vector_unit_bytes?: number;
  warp_size?: number;
}

export interface Kernel {
  kernel_id: string;
  op: string;
  input_shapes: number[][];
  output_shape: number[];
  attributes: Record<string, number>;
}

export interface Task {
  task_id: string;
  kernel: Kernel;
  target: string;
  network_tag: string;
}

export interface ScheduleConfig {
  tile_factors: number[][];
  unroll_factor: number;
  vectorize_width: number;
  thread_binding?: [number, number];
}

export interface MeasurementRecord {
  record_id: string;
  task_id: string;
  schedule: ScheduleConfig;
  /** Omitted for error records. */
  mean_cost?: number;
  measured_flops: number;
  error_flag: boolean;
}

export interface DatasetRows {
  hardware: HardwareParams[];
  tasks: Task[];
  records: MeasurementRecord[];
}
