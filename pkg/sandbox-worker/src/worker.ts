#!/usr/bin/env node
/**
 * Entry point: parse resource-limit flags and serve the stdio protocol.
 *
 *   node dist/worker.js [--memory-mb N] [--cpu-seconds N] [--output-cap N]
 */

import { WorkerServer } from "./server.js";
import { ResourceLimits } from "./interpreter.js";

function parseArgs(argv: string[]): ResourceLimits {
  const limits: ResourceLimits = { memoryMb: 512, cpuSeconds: 10, outputCap: 4096 };
  for (let i = 0; i < argv.length; i += 1) {
    const value = () => {
      const raw = Number(argv[i + 1]);
      if (!Number.isFinite(raw) || raw < 0) {
        throw new Error(`invalid value for ${argv[i]}: ${argv[i + 1]}`);
      }
      i += 1;
      return Math.floor(raw);
    };
    switch (argv[i]) {
      case "--memory-mb":
        limits.memoryMb = value();
        break;
      case "--cpu-seconds":
        limits.cpuSeconds = value();
        break;
      case "--output-cap":
        limits.outputCap = value();
        break;
      default:
        throw new Error(`unknown flag: ${argv[i]}`);
    }
  }
  return limits;
}

async function main(): Promise<void> {
  let limits: ResourceLimits;
  try {
    limits = parseArgs(process.argv.slice(2));
  } catch (err) {
    process.stderr.write(`${String(err)}\n`);
    process.exit(2);
  }
  const server = new WorkerServer(limits);
  try {
    await server.start();
  } catch (err) {
    process.stderr.write(`worker failed to start: ${String(err)}\n`);
    process.exit(1);
  }
}

void main();
