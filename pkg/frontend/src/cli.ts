#!/usr/bin/env node
/**
 * Command line entry points.
 *
 *   tenset-ingest convert --archive A --mapping M --out F [--report R]
 *   tenset-ingest verify F
 *
 * Exit codes: 0 success (for verify: the file is valid), 1 usage errors,
 * 2 data errors (missing or malformed inputs; for verify: diagnostics).
 */

import { writeFileSync } from "node:fs";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { ArchiveError, loadArchive } from "./archive.js";
import { convertArchive } from "./convert.js";
import { MappingError, loadMapping } from "./mapping.js";
import { VerifyIOError, verifyFile } from "./verify.js";

interface ConvertArgs {
  archive: string;
  mapping: string;
  out: string;
  report?: string;
}

function runConvert(args: ConvertArgs): number {
  const archive = loadArchive(args.archive);
  const mapping = loadMapping(args.mapping);
  const { text, report } = convertArchive(archive, mapping);
  writeFileSync(args.out, text, "utf-8");
  if (args.report !== undefined) {
    writeFileSync(args.report, JSON.stringify(report, null, 2) + "\n", "utf-8");
  }
  console.log(
    `converted ${args.archive}: ${report.emitted} records emitted, ` +
      `${report.dropped} dropped of ${report.entry_count} entries`,
  );
  for (const [reason, count] of Object.entries(report.dropped_by_reason)) {
    console.log(`  dropped ${reason}: ${count}`);
  }
  if (report.projections.length > 0) {
    console.log(`  projected steps: ${report.projections.length}`);
  }
  console.log(`wrote ${args.out}`);
  return 0;
}

function runVerify(path: string): number {
  const result = verifyFile(path);
  if (result.ok) {
    console.log(`${path}: ok`);
    return 0;
  }
  for (const diag of result.diagnostics) {
    console.error(`${path}: line ${diag.line}: ${diag.message}`);
  }
  return 2;
}

export async function main(argv: string[]): Promise<number> {
  let exitCode = 0;
  const parser = yargs(argv)
    .scriptName("tenset-ingest")
    .usage("$0 <command>")
    .command(
      "convert",
      "convert a measurement archive to the dataset format",
      (cmd) =>
        cmd
          .option("archive", { type: "string", demandOption: true })
          .option("mapping", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("report", { type: "string" }),
      (args) => {
        exitCode = runConvert(args as unknown as ConvertArgs);
      },
    )
    .command(
      "verify <file>",
      "check a dataset file against the format schema",
      (cmd) => cmd.positional("file", { type: "string", demandOption: true }),
      (args) => {
        exitCode = runVerify(args.file as string);
      },
    )
    .demandCommand(1, "expected a command")
    .strict()
    .fail((msg, err) => {
      throw err ?? new UsageFailure(msg ?? "usage error");
    })
    .help();

  try {
    await parser.parse();
  } catch (exc) {
    if (exc instanceof UsageFailure) {
      console.error(`usage error: ${exc.message}`);
      return 1;
    }
    if (
      exc instanceof ArchiveError ||
      exc instanceof MappingError ||
      exc instanceof VerifyIOError
    ) {
      console.error(`error: ${exc.message}`);
      return 2;
    }
    throw exc;
  }
  return exitCode;
}

class UsageFailure extends Error {}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;

if (invokedDirectly) {
  main(hideBin(process.argv)).then(
    (code) => {
      process.exitCode = code;
    },
    (exc) => {
      console.error(exc instanceof Error ? exc.stack : String(exc));
      process.exitCode = 70;
    },
  );
}
