/**
 * The three built-in models.
 *
 * constant_velocity extrapolates the target's last observed frame with zero
 * acceleration and must match the engine's in-process baseline bit-for-bit
 * in formula (any residual difference is libm rounding, far below 1e-9).
 * constant_control fits a bicycle control pair from the last three frames
 * and holds it. scripted replays pre-recorded raw response lines, which is
 * how protocol-violation tests inject short, NaN, or non-JSON payloads.
 */
import { readFileSync } from 'node:fs';
import { Model, PredictRequest, Session } from './protocol';

// wire frames carry no vehicle geometry, so the bicycle fit assumes a
// mid-size car: rear-axle distance = 0.5 * 4.0 m
const DEFAULT_LR = 2.0;
const A_MAX = 8.0;
const BETA_MAX = 0.6;

const clamp = (x: number, limit: number) => Math.max(-limit, Math.min(limit, x));

const wrapAngle = (theta: number) => {
  let wrapped = theta % (2 * Math.PI);
  if (wrapped <= -Math.PI) wrapped += 2 * Math.PI;
  else if (wrapped > Math.PI) wrapped -= 2 * Math.PI;
  return wrapped;
};

export const constantVelocity: Model = {
  kinds: ['positions'],
  respond(session: Session, request: PredictRequest): string {
    const [x, y, psi, v] = request.target[request.target.length - 1];
    const stepX = v * Math.cos(psi) * session.dt;
    const stepY = v * Math.sin(psi) * session.dt;
    const positions: number[][] = [];
    for (let i = 0; i < session.horizon; i++) {
      positions.push([x + (i + 1) * stepX, y + (i + 1) * stepY]);
    }
    return JSON.stringify({ type: 'prediction', positions });
  },
};

export const constantControl: Model = {
  kinds: ['bicycle_controls'],
  respond(session: Session, request: PredictRequest): string {
    const tail = request.target.slice(-3);
    let a = 0;
    let beta = 0;
    if (tail.length >= 2) {
      const accels: number[] = [];
      const slips: number[] = [];
      for (let i = 0; i + 1 < tail.length; i++) {
        const [, , psi0, v0] = tail[i];
        const [, , psi1, v1] = tail[i + 1];
        accels.push((v1 - v0) / session.dt);
        if (v0 !== 0) {
          const ratio = (wrapAngle(psi1 - psi0) * DEFAULT_LR) / (v0 * session.dt);
          slips.push(Math.asin(Math.max(-1, Math.min(1, ratio))));
        } else {
          slips.push(0);
        }
      }
      a = accels.reduce((s, u) => s + u, 0) / accels.length;
      beta = slips.reduce((s, u) => s + u, 0) / slips.length;
    }
    const u = [clamp(a, A_MAX), clamp(beta, BETA_MAX)];
    const controls: number[][] = [];
    for (let i = 0; i < session.horizon; i++) controls.push(u);
    return JSON.stringify({ type: 'prediction', controls });
  },
};

/** Replays raw lines from a file, cycling when exhausted. */
export function scripted(scriptPath: string): Model {
  const lines = readFileSync(scriptPath, 'utf-8')
    .split('\n')
    .filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new Error(`script ${scriptPath} holds no response lines`);
  }
  let cursor = 0;
  return {
    kinds: ['positions', 'bicycle_controls', 'particle_controls'],
    respond(): string {
      const line = lines[cursor % lines.length];
      cursor += 1;
      return line;
    },
  };
}

export function buildModel(name: string, scriptPath?: string): Model {
  switch (name) {
    case 'constant_velocity':
      return constantVelocity;
    case 'constant_control':
      return constantControl;
    case 'scripted':
      if (!scriptPath) throw new Error('scripted model needs --script <file>');
      return scripted(scriptPath);
    default:
      throw new Error(`unknown model ${name}`);
  }
}
