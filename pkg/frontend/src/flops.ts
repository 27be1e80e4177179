/**
 * Flop accounting for converted kernels, matching the dataset's cost model:
 * elementwise ops charge a documented per-element constant, matmul and
 * conv2d use multiply-accumulate counts, and the winograd variant is charged
 * half the direct conv count. BigInt keeps the arithmetic exact well past
 * Number's 2^53 integer range.
 */

import {
  CONV_OPS,
  ELEMENTWISE_BINARY,
  ELEMENTWISE_OP_COST,
  ELEMENTWISE_UNARY,
  FLOP_LIMIT,
  Kernel,
} from "./types.js";

export interface FlopResult {
  count?: bigint;
  error?: string;
}

export function flopCount(kernel: Kernel): FlopResult {
  const op = kernel.op;
  let count: bigint;
  if (ELEMENTWISE_UNARY.has(op) || ELEMENTWISE_BINARY.has(op)) {
    count = prod(kernel.output_shape) * ELEMENTWISE_OP_COST[op]!;
  } else if (op === "matmul") {
    const [a, b] = kernel.input_shapes as [number[], number[]];
    count = 2n * BigInt(a[0]!) * BigInt(a[1]!) * BigInt(b[1]!);
  } else if (CONV_OPS.has(op)) {
    const [data, weight] = kernel.input_shapes as [number[], number[]];
    const [n, , , cIn] = data as [number, number, number, number];
    const [kH, kW, , cOut] = weight as [number, number, number, number];
    const [, hOut, wOut] = kernel.output_shape as [
      number,
      number,
      number,
      number,
    ];
    count =
      2n *
      BigInt(n) *
      BigInt(hOut) *
      BigInt(wOut) *
      BigInt(cOut) *
      BigInt(kH) *
      BigInt(kW) *
      BigInt(cIn);
    if (op === "conv2d-winograd") {
      count /= 2n;
    }
  } else {
    return { error: `unhandled op ${JSON.stringify(op)}` };
  }
  if (count > FLOP_LIMIT) {
    return { error: `flop count ${count} exceeds 2**63` };
  }
  if (count < 1n) {
    return { error: "flop count must be positive" };
  }
  return { count };
}

function prod(shape: readonly number[]): bigint {
  let p = 1n;
  for (const dim of shape) {
    p *= BigInt(dim);
  }
  return p;
}
