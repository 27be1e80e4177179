import { describe, expect, it } from "vitest";

import { MappingError, parseMapping } from "../src/mapping";

const CPU = {
  target_id: "cpu-a",
  hardware_class: "CPU",
  cache_line_bytes: 64,
  num_cores: 8,
  vector_unit_bytes: 32,
};

function mappingText(overrides: object = {}): string {
  return JSON.stringify({
    operators: { dense: "matmul" },
    targets: { "llvm -cpu": CPU },
    ...overrides,
  });
}

describe("parseMapping", () => {
  it("accepts a minimal valid mapping", () => {
    const m = parseMapping(mappingText());
    expect(m.operators.get("dense")).toBe("matmul");
    expect(m.targets.get("llvm -cpu")!.target_id).toBe("cpu-a");
  });

  it("rejects non-JSON text", () => {
    expect(() => parseMapping("operators:")).toThrow(MappingError);
  });

  it("rejects an empty operator table", () => {
    expect(() => parseMapping(mappingText({ operators: {} }))).toThrow(
      /empty operator table/,
    );
  });

  it("rejects an empty target table", () => {
    expect(() => parseMapping(mappingText({ targets: {} }))).toThrow(
      /empty target table/,
    );
  });

  it("rejects operator values outside the registry", () => {
    expect(() =>
      parseMapping(mappingText({ operators: { dense: "gemm" } })),
    ).toThrow(/unknown operator kind "gemm"/);
  });

  it("rejects targets missing a class parameter", () => {
    const broken = { ...CPU } as Record<string, unknown>;
    delete broken.num_cores;
    expect(() =>
      parseMapping(mappingText({ targets: { "llvm -cpu": broken } })),
    ).toThrow(/missing num_cores/);
  });

  it("rejects targets with parameters of the other class", () => {
    const broken = { ...CPU, warp_size: 32 };
    expect(() =>
      parseMapping(mappingText({ targets: { "llvm -cpu": broken } })),
    ).toThrow(/does not apply to CPU/);
  });

  it("rejects duplicate target ids across archive strings", () => {
    expect(() =>
      parseMapping(
        mappingText({ targets: { "llvm -a": CPU, "llvm -b": CPU } }),
      ),
    ).toThrow(/duplicate target_id/);
  });

  it("rejects unknown top-level keys", () => {
    expect(() => parseMapping(mappingText({ extra: 1 }))).toThrow(
      MappingError,
    );
  });
});
