/**
 * Adapter entry point.
 *
 *   node dist/src/cli.js --listen 127.0.0.1:7741 --model synthetic-v1 \
 *       --device cpu --latent 16,16,4 --factor 8 --vocab 1024 --seed 0
 *
 * Refuses to start when the codec self-test exceeds the quantization bound.
 */
import { SyntheticBackbone } from "./backbone.js";
import { AdapterServer } from "./server.js";
import { BackendSession } from "./session.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key?.startsWith("--") || value === undefined) {
      throw new Error(`malformed arguments near ${key ?? "<end>"}`);
    }
    out.set(key.slice(2), value);
  }
  return out;
}

export async function main(argv: string[]): Promise<number> {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const listen = args.get("listen") ?? "127.0.0.1:7741";
  const [host, portText] = [listen.slice(0, listen.lastIndexOf(":")), listen.slice(listen.lastIndexOf(":") + 1)];
  const port = Number(portText);
  if (!host || !Number.isInteger(port)) {
    console.error(`--listen must be host:port, got ${listen}`);
    return 2;
  }
  const latent = (args.get("latent") ?? "16,16,4").split(",").map(Number);
  if (latent.length !== 3 || latent.some((v) => !Number.isInteger(v) || v < 1)) {
    console.error("--latent must be h,w,c");
    return 2;
  }

  const backbone = new SyntheticBackbone({
    modelId: args.get("model") ?? "synthetic-v1",
    seed: Number(args.get("seed") ?? 0),
    latentH: latent[0],
    latentW: latent[1],
    latentC: latent[2],
    spatialFactor: Number(args.get("factor") ?? 8),
    vocabSize: Number(args.get("vocab") ?? 1024),
  });
  const session = new BackendSession(backbone, { device: args.get("device") ?? "cpu" });

  const worst = session.codecSelfTest();
  const bound = 1 / 127.5;
  if (worst > bound) {
    console.error(`codec self-test failed: ${worst} > ${bound}`);
    return 1;
  }
  console.log(`codec self-test ok (max reconstruction error ${worst.toExponential(3)})`);

  const server = new AdapterServer(session);
  const address = await server.listen(host, port);
  console.log(
    `model adapter serving ${backbone.modelId} on ${address.address}:${address.port} ` +
      `(device ${session.device}, latent ${backbone.latentH}x${backbone.latentW}x${backbone.latentC}, ` +
      `factor ${backbone.spatialFactor})`,
  );
  await new Promise<void>((resolve) => {
    process.once("SIGINT", resolve);
    process.once("SIGTERM", resolve);
  });
  await server.close();
  return 0;
}

const isDirectRun = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isDirectRun) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(err);
      process.exit(1);
    },
  );
}
