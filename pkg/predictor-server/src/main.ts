/** CLI entry: `node dist/main.js --model constant_velocity [--script file]`. */
import { buildModel } from './models';
import { serve } from './protocol';

function parseArgs(argv: string[]): { model: string; script?: string } {
  let model = 'constant_velocity';
  let script: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--model' && i + 1 < argv.length) {
      model = argv[++i];
    } else if (argv[i] === '--script' && i + 1 < argv.length) {
      script = argv[++i];
    } else {
      throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  return { model, script };
}

function main(): void {
  let args;
  try {
    args = parseArgs(process.argv.slice(2));
    const model = buildModel(args.model, args.script);
    serve(model, process.stdin, process.stdout, (code) => process.exit(code));
  } catch (err) {
    process.stderr.write(`${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  }
}

main();
