/**
 * The wire-protocol server: newline-delimited JSON over this process's
 * stdio.
 *
 * Handshake:  {"ready": true, "protocol": 1}
 * Request:    {"id": "...", "code": "...", "timeout_ms": N}
 * Response:   {"id": "...", "stdout": "...", "value": "..."|null,
 *              "error": "..."|null, "duration_ms": N, "truncated": false}
 *
 * One request is in flight at a time; responses keep request order. A
 * request that outruns its timeout_ms gets error "Timeout" and the
 * interpreter is killed and respawned (namespace lost). An interpreter
 * crash yields an error starting with "WorkerCrashed" and a respawn;
 * the worker process itself never dies with the interpreter.
 */

import { createInterface } from "node:readline";
import { InterpreterExit, PythonInterpreter, ResourceLimits } from "./interpreter.js";

export const PROTOCOL_VERSION = 1;
export const MAX_CODE_BYTES = 64 * 1024;
const HANDSHAKE_LINE = '{"ready": true, "protocol": 1}';
const DEFAULT_TIMEOUT_MS = 10_000;

interface WireRequest {
  id?: unknown;
  code?: unknown;
  timeout_ms?: unknown;
}

interface WireResponse {
  id: unknown;
  stdout: string;
  value: string | null;
  error: string | null;
  duration_ms: number;
  truncated: boolean;
}

function errorResponse(id: unknown, error: string, durationMs = 0): WireResponse {
  return { id, stdout: "", value: null, error, duration_ms: durationMs, truncated: false };
}

export class WorkerServer {
  private interpreter: PythonInterpreter;
  private queue: Promise<void> = Promise.resolve();

  constructor(
    private readonly limits: ResourceLimits,
    private readonly out: NodeJS.WritableStream = process.stdout,
  ) {
    this.interpreter = new PythonInterpreter(limits);
  }

  async start(input: NodeJS.ReadableStream = process.stdin): Promise<void> {
    await this.interpreter.start();
    this.out.write(HANDSHAKE_LINE + "\n");
    const lines = createInterface({ input });
    lines.on("line", (line) => {
      if (!line.trim()) {
        return;
      }
      // serialize: one in-flight request per session; a failure must not
      // sever the chain for later requests
      this.queue = this.queue
        .then(() => this.handleLine(line))
        .catch((err) => {
          process.stderr.write(`request handling failed: ${String(err)}\n`);
        });
    });
    await new Promise<void>((resolve) => {
      lines.on("close", () => {
        this.queue.then(() => {
          this.interpreter.kill();
          resolve();
        });
      });
    });
  }

  private respond(response: WireResponse): void {
    this.out.write(JSON.stringify(response) + "\n");
  }

  private async respawn(): Promise<void> {
    this.interpreter.kill();
    this.interpreter = new PythonInterpreter(this.limits);
    await this.interpreter.start();
  }

  private async handleLine(line: string): Promise<void> {
    let request: WireRequest;
    try {
      request = JSON.parse(line) as WireRequest;
    } catch {
      this.respond(errorResponse(null, "ProtocolError: request is not valid JSON"));
      return;
    }
    const id = request.id ?? null;
    const code = typeof request.code === "string" ? request.code : null;
    if (code === null) {
      this.respond(errorResponse(id, "ProtocolError: missing string field 'code'"));
      return;
    }
    if (Buffer.byteLength(code, "utf-8") > MAX_CODE_BYTES) {
      this.respond(errorResponse(id, "ValueError: code exceeds 64 KiB"));
      return;
    }
    const timeoutMs =
      typeof request.timeout_ms === "number" && request.timeout_ms > 0
        ? request.timeout_ms
        : DEFAULT_TIMEOUT_MS;

    if (!this.interpreter.alive) {
      try {
        await this.respawn();
      } catch (err) {
        this.respond(errorResponse(id, `WorkerCrashed: respawn failed: ${String(err)}`));
        return;
      }
    }

    const started = Date.now();
    let timer: NodeJS.Timeout | undefined;
    const timedOut = new Promise<"timeout">((resolve) => {
      timer = setTimeout(() => resolve("timeout"), timeoutMs);
    });
    try {
      const raced = await Promise.race([this.interpreter.run(id, code), timedOut]);
      if (raced === "timeout") {
        await this.respawn();
        this.respond(errorResponse(id, "Timeout", Date.now() - started));
        return;
      }
      this.respond({
        id,
        stdout: raced.stdout ?? "",
        value: raced.value ?? null,
        error: raced.error ?? null,
        duration_ms: raced.duration_ms ?? Date.now() - started,
        truncated: Boolean(raced.truncated),
      });
    } catch (err) {
      const reason = err instanceof InterpreterExit ? err.message : String(err);
      try {
        await this.respawn();
      } catch {
        // next request will retry the respawn
      }
      this.respond(errorResponse(id, `WorkerCrashed: ${reason}`, Date.now() - started));
    } finally {
      clearTimeout(timer);
    }
  }
}
