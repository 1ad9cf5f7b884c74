/** Error carrying the core toolkit's machine-readable code and context. */
export class CoreError extends Error {
  readonly code: string;
  readonly context: Record<string, unknown>;

  constructor(code: string, message: string, context: Record<string, unknown> = {}) {
    super(message);
    this.name = "CoreError";
    this.code = code;
    this.context = context;
  }
}

/** Parse a `{code, message, context}` JSON blob from the CLI's stderr. */
export function coreErrorFromStderr(stderr: string, exitCode: number | null): CoreError {
  const line = stderr
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.startsWith("{"))
    .pop();
  if (line) {
    try {
      const parsed = JSON.parse(line) as {
        code?: string;
        message?: string;
        context?: Record<string, unknown>;
      };
      return new CoreError(parsed.code ?? "internal", parsed.message ?? stderr, parsed.context ?? {});
    } catch {
      // fall through to the generic error below
    }
  }
  return new CoreError("internal", `core CLI failed (exit ${exitCode}): ${stderr}`);
}
