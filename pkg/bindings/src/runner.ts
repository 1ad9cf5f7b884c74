import { execFileSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { CoreError, coreErrorFromStderr } from "./errors.js";

/** Interpreter used to launch the core; override via ANTHROKIT_PYTHON. */
export function pythonBinary(): string {
  return process.env.ANTHROKIT_PYTHON ?? "python3";
}

/** Run `python -m anthrokit --deterministic <args>`; returns stdout. */
export function runCore(args: string[]): string {
  try {
    return execFileSync(pythonBinary(), ["-m", "anthrokit", "--deterministic", ...args], {
      encoding: "utf8",
      maxBuffer: 256 * 1024 * 1024,
    });
  } catch (err) {
    const e = err as { status?: number | null; stderr?: string | Buffer };
    const stderr = e.stderr == null ? "" : e.stderr.toString();
    if (e.status === 2) {
      throw new CoreError("usage", stderr || "usage error");
    }
    throw coreErrorFromStderr(stderr, e.status ?? null);
  }
}

/** Scratch directory for one bridged call; always cleaned up. */
export function withScratch<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "anthrokit-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
