/**
 * Wire protocol: single-line JSON messages over stdin/stdout, UTF-8.
 *
 * hello   -> ready (echoes a supported output kind)
 * predict -> prediction with exactly t_horizon entries
 * bye     -> process exits 0 (likewise on EOF)
 *
 * A malformed or unanswerable request produces one error message and the
 * loop keeps serving; one request is in flight at a time.
 */
import { createInterface } from 'node:readline';

export type OutputKind = 'positions' | 'bicycle_controls' | 'particle_controls';

export interface Hello {
  type: 'hello';
  version: number;
  dt: number;
  t_obs: number;
  t_horizon: number;
  output_kind: OutputKind;
}

export interface PredictRequest {
  type: 'predict';
  target: number[][];
  neighbors: Record<string, number[][]>;
  map: number[][][];
}

export interface Session {
  dt: number;
  tObs: number;
  horizon: number;
  outputKind: OutputKind;
}

export interface Model {
  /** Output kinds this model can produce. */
  kinds: OutputKind[];
  /** Answer one predict request; returns a raw line to emit. */
  respond(session: Session, request: PredictRequest): string;
}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === 'number' && Number.isFinite(x);
}

function errorLine(msg: string): string {
  return JSON.stringify({ type: 'error', msg });
}

export function validateTarget(request: PredictRequest, session: Session): string | null {
  const target = request.target;
  if (!Array.isArray(target) || target.length !== session.tObs) {
    const got = Array.isArray(target) ? target.length : typeof target;
    return `target must hold exactly ${session.tObs} frames, got ${got}`;
  }
  for (const row of target) {
    if (!Array.isArray(row) || row.length !== 4 || !row.every(isFiniteNumber)) {
      return 'target frames must be [x, y, psi, v] finite numbers';
    }
  }
  return null;
}

export function serve(
  model: Model,
  input: NodeJS.ReadableStream,
  output: NodeJS.WritableStream,
  onExit: (code: number) => void,
): void {
  let session: Session | null = null;
  const reader = createInterface({ input, terminal: false });

  const emit = (line: string) => output.write(line + '\n');

  reader.on('line', (line: string) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    let message: Record<string, unknown>;
    try {
      message = JSON.parse(trimmed);
    } catch {
      emit(errorLine('request is not valid JSON'));
      return;
    }
    const type = message['type'];
    if (type === 'hello') {
      const hello = message as unknown as Hello;
      if (!model.kinds.includes(hello.output_kind)) {
        emit(errorLine(`model cannot produce ${hello.output_kind}; supports ${model.kinds.join(', ')}`));
        return;
      }
      if (![hello.dt, hello.t_obs, hello.t_horizon].every(isFiniteNumber) || hello.t_horizon < 1) {
        emit(errorLine('hello must carry numeric dt, t_obs, t_horizon'));
        return;
      }
      session = {
        dt: hello.dt,
        tObs: hello.t_obs,
        horizon: hello.t_horizon,
        outputKind: hello.output_kind,
      };
      emit(JSON.stringify({ type: 'ready', output_kind: hello.output_kind }));
    } else if (type === 'predict') {
      if (session === null) {
        emit(errorLine('predict before handshake'));
        return;
      }
      const request = message as unknown as PredictRequest;
      const problem = validateTarget(request, session);
      if (problem !== null) {
        emit(errorLine(problem));
        return;
      }
      emit(model.respond(session, request));
    } else if (type === 'bye') {
      reader.close();
      onExit(0);
    } else {
      emit(errorLine(`unknown message type ${JSON.stringify(type)}`));
    }
  });

  reader.on('close', () => onExit(0));
}
