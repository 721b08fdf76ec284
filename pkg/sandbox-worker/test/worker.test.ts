/**
 * Wire-protocol conformance for the built worker (dist/worker.js):
 * handshake, notebook-style echo, namespace persistence, error surfacing,
 * timeout kill+restart, and the output cap.
 */

import { afterEach, describe, expect, it } from "vitest";
import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import { createInterface, Interface } from "node:readline";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const WORKER = join(dirname(fileURLToPath(import.meta.url)), "..", "dist", "worker.js");

interface Response {
  id: unknown;
  stdout: string;
  value: string | null;
  error: string | null;
  duration_ms: number;
  truncated: boolean;
}

class WorkerHandle {
  child: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private waiters: Array<(line: string) => void> = [];
  private buffer: string[] = [];
  rawFirstLine: string | null = null;
  private nextId = 0;

  constructor(args: string[] = []) {
    this.child = spawn("node", [WORKER, ...args], { stdio: ["pipe", "pipe", "pipe"] });
    this.lines = createInterface({ input: this.child.stdout });
    this.lines.on("line", (line) => {
      if (this.rawFirstLine === null) {
        this.rawFirstLine = line;
      }
      const waiter = this.waiters.shift();
      if (waiter) {
        waiter(line);
      } else {
        this.buffer.push(line);
      }
    });
  }

  nextLine(timeoutMs = 20_000): Promise<string> {
    const buffered = this.buffer.shift();
    if (buffered !== undefined) {
      return Promise.resolve(buffered);
    }
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("no line from worker")), timeoutMs);
      this.waiters.push((line) => {
        clearTimeout(timer);
        resolve(line);
      });
    });
  }

  async handshake(): Promise<{ ready: boolean; protocol: number }> {
    return JSON.parse(await this.nextLine());
  }

  send(request: Record<string, unknown>): void {
    this.child.stdin.write(JSON.stringify(request) + "\n");
  }

  async execute(code: string, timeoutMs = 10_000): Promise<Response> {
    const id = `req-${this.nextId++}`;
    this.send({ id, code, timeout_ms: timeoutMs });
    const response = JSON.parse(await this.nextLine()) as Response;
    expect(response.id).toBe(id);
    return response;
  }

  kill(): void {
    this.child.kill("SIGKILL");
  }
}

const KP_SNIPPET = [
  "x = 2.901292604180679",
  "P_NOCl_eq = 675 + 2*x",
  "P_NO_eq = 43 - 2*x",
  "P_Cl2_eq = 23 - x",
  "Kp_calculated = (P_NO_eq**2 * P_Cl2_eq) / (P_NOCl_eq**2)",
  "Kp_calculated",
].join("\n");

describe("sandbox worker", () => {
  let worker: WorkerHandle;

  afterEach(() => {
    worker?.kill();
  });

  it("emits the protocol-1 handshake as its first line", async () => {
    worker = new WorkerHandle();
    const handshake = await worker.handshake();
    expect(handshake).toEqual({ ready: true, protocol: 1 });
    expect(worker.rawFirstLine).toBe('{"ready": true, "protocol": 1}');
  });

  it("echoes the repr of a trailing expression", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const response = await worker.execute("1+1");
    expect(response.value).toBe("2");
    expect(response.error).toBeNull();
  });

  it("reproduces the equilibrium-constant float repr exactly", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const response = await worker.execute(KP_SNIPPET);
    expect(response.value).toBe("0.059999999999999984");
  });

  it("persists the namespace across requests", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    await worker.execute("x = 5694");
    const response = await worker.execute("x");
    expect(response.value).toBe("5694");
  });

  it("captures stdout separately from the echoed value", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const response = await worker.execute("print('N = 5694, Q = 5')\n2+2");
    expect(response.stdout).toBe("N = 5694, Q = 5\n");
    expect(response.value).toBe("4");
  });

  it("does not echo statements or a trailing None", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    expect((await worker.execute("y = 10")).value).toBeNull();
    expect((await worker.execute("None")).value).toBeNull();
  });

  it("surfaces a SyntaxError with the class-name prefix", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const response = await worker.execute('print(f\\"N = 5694\\")');
    expect(response.error).toMatch(/^SyntaxError: /);
    expect(response.error).toContain("line continuation");
  });

  it("surfaces runtime exceptions as Class: message", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const response = await worker.execute("undefined_name");
    expect(response.error).toMatch(/^NameError: /);
  });

  it("times out a busy loop within twice the limit and restarts", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    await worker.execute("marker = 1");
    const started = Date.now();
    const response = await worker.execute("while True: pass", 500);
    const elapsed = Date.now() - started;
    expect(response.error).toBe("Timeout");
    expect(elapsed).toBeLessThan(1000);
    // namespace was lost with the killed interpreter
    const after = await worker.execute("marker");
    expect(after.error).toMatch(/^NameError: /);
  });

  it("caps combined output and sets truncated", async () => {
    worker = new WorkerHandle(["--output-cap", "256"]);
    await worker.handshake();
    const response = await worker.execute("print('y' * 10000)");
    expect(response.truncated).toBe(true);
    expect(response.stdout.length).toBeLessThanOrEqual(256);
    const echoed = await worker.execute("'z' * 10000");
    expect(echoed.truncated).toBe(true);
    expect((echoed.value ?? "").length + echoed.stdout.length).toBeLessThanOrEqual(256);
  });

  it("keeps request order and echoes ids one-to-one", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    worker.send({ id: "a", code: "import time; time.sleep(0.05); 'first'", timeout_ms: 5000 });
    worker.send({ id: "b", code: "'second'", timeout_ms: 5000 });
    const first = JSON.parse(await worker.nextLine()) as Response;
    const second = JSON.parse(await worker.nextLine()) as Response;
    expect(first.id).toBe("a");
    expect(first.value).toBe("'first'");
    expect(second.id).toBe("b");
    expect(second.value).toBe("'second'");
  });

  it("rejects oversized code with an error result", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const big = "#" + "x".repeat(65 * 1024);
    const response = await worker.execute(big);
    expect(response.error).toMatch(/64 KiB/);
  });

  it("survives an interpreter crash and flags the result", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const crashed = await worker.execute("import os; os._exit(9)");
    expect(crashed.error).toMatch(/^WorkerCrashed/);
    const recovered = await worker.execute("7*6");
    expect(recovered.value).toBe("42");
  });

  it("denies network access by default", async () => {
    worker = new WorkerHandle();
    await worker.handshake();
    const response = await worker.execute(
      "import socket\nsocket.socket(socket.AF_INET, socket.SOCK_STREAM)",
    );
    expect(response.error).toMatch(/^PermissionError: /);
  });
});
