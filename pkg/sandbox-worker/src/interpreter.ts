/**
 * Lifecycle manager for the persistent Python interpreter child.
 *
 * The child runs bootstrap.py: a REPL with one JSON object per line in
 * each direction. This class owns spawning, the inner ready handshake,
 * request/response pairing, and hard kills; it never interprets results.
 */

import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import { createInterface, Interface } from "node:readline";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

export interface ResourceLimits {
  memoryMb: number;
  cpuSeconds: number;
  outputCap: number;
}

export interface InterpreterResult {
  id: unknown;
  stdout: string;
  value: string | null;
  error: string | null;
  duration_ms: number;
  truncated: boolean;
}

const BOOTSTRAP = join(dirname(fileURLToPath(import.meta.url)), "bootstrap.py");

export class InterpreterExit extends Error {
  constructor(public readonly code: number | null, public readonly signal: string | null) {
    super(`interpreter exited (code=${code}, signal=${signal})`);
  }
}

export class PythonInterpreter {
  private child: ChildProcessWithoutNullStreams | null = null;
  private lines: Interface | null = null;
  private pending: {
    resolve: (r: InterpreterResult) => void;
    reject: (e: Error) => void;
  } | null = null;

  constructor(
    private readonly limits: ResourceLimits,
    private readonly pythonBin: string = process.env.SANDBOX_PYTHON ?? "python3",
  ) {}

  /** Spawn the child and wait for its ready line. */
  async start(): Promise<void> {
    const limitsJson = JSON.stringify({
      memory_mb: this.limits.memoryMb,
      cpu_seconds: this.limits.cpuSeconds,
      output_cap: this.limits.outputCap,
    });
    const child = spawn(this.pythonBin, [BOOTSTRAP, limitsJson], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    this.child = child;
    this.lines = createInterface({ input: child.stdout });
    // drain stderr so a crashing child can never block on a full pipe
    child.stderr.resume();

    this.lines.on("line", (line) => this.onLine(line));
    child.on("exit", (code, signal) => {
      const pending = this.pending;
      this.pending = null;
      this.child = null;
      if (pending) {
        pending.reject(new InterpreterExit(code, signal));
      }
    });
    child.on("error", (err) => {
      const pending = this.pending;
      this.pending = null;
      this.child = null;
      if (pending) {
        pending.reject(err);
      }
    });

    await new Promise<void>((resolve, reject) => {
      const onReady = (line: string) => {
        this.lines?.off("line", onReady);
        try {
          const parsed = JSON.parse(line);
          if (parsed && parsed.ok === true) {
            resolve();
          } else {
            reject(new Error(`unexpected interpreter handshake: ${line}`));
          }
        } catch {
          reject(new Error(`unparseable interpreter handshake: ${line}`));
        }
      };
      // handshake line arrives before any request is sent
      this.lines?.prependListener("line", onReady);
      child.once("exit", (code, signal) => reject(new InterpreterExit(code, signal)));
      child.once("error", reject);
    });
  }

  private onLine(line: string): void {
    const pending = this.pending;
    if (!pending) {
      return; // handshake line or stray output
    }
    let parsed: InterpreterResult;
    try {
      parsed = JSON.parse(line) as InterpreterResult;
    } catch {
      this.pending = null;
      pending.reject(new Error(`unparseable interpreter response: ${line.slice(0, 200)}`));
      return;
    }
    this.pending = null;
    pending.resolve(parsed);
  }

  get alive(): boolean {
    return this.child !== null;
  }

  /** Send one request; resolves with the child's response or rejects on exit. */
  run(id: unknown, code: string): Promise<InterpreterResult> {
    if (!this.child || !this.child.stdin.writable) {
      return Promise.reject(new Error("interpreter not running"));
    }
    if (this.pending) {
      return Promise.reject(new Error("interpreter already has a request in flight"));
    }
    return new Promise<InterpreterResult>((resolve, reject) => {
      this.pending = { resolve, reject };
      this.child!.stdin.write(JSON.stringify({ id, code }) + "\n");
    });
  }

  /** Hard kill; any in-flight request rejects via the exit handler. */
  kill(): void {
    if (this.child) {
      this.child.kill("SIGKILL");
    }
  }
}
