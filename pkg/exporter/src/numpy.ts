/**
 * Reconstruction shims for the objects that appear inside Planetoid
 * pickles: numpy ndarrays and dtypes, scipy CSR matrices, and
 * collections.defaultdict. Together with `unpickle` this is enough to
 * load files written by Python 2 cPickle or re-pickled by Python 3.
 *
 * Only the numeric dtypes that can actually carry graph data are
 * decodable; anything else fails loudly.
 */

import { latin1Bytes, PickleError, PyGlobal } from "./pickle.js";

/** Minimal numpy dtype: a kind+size descriptor plus byte order. */
export class DType {
  byteorder: string; // '<', '>', '=', or '|'

  constructor(readonly descr: string) {
    this.byteorder = "=";
  }

  /** state = (version, byteorder, subdescr, names, fields, elsize, alignment, flags) */
  __setstate__(state: unknown): void {
    if (!Array.isArray(state) || state.length < 2 || typeof state[1] !== "string") {
      throw new PickleError("unexpected numpy.dtype state");
    }
    this.byteorder = state[1];
  }

  get kind(): string {
    return this.descr[0] ?? "?";
  }

  get itemsize(): number {
    const n = Number(this.descr.slice(1));
    if (!Number.isInteger(n) || n <= 0) {
      throw new PickleError(`cannot decode numpy dtype '${this.descr}'`);
    }
    return n;
  }

  get littleEndian(): boolean {
    // '=' is machine order at pickling time; these datasets were written
    // on x86, and a wrong guess fails the element-count/value checks.
    return this.byteorder !== ">";
  }
}

type RawData = Uint8Array | string;

/** Minimal numpy ndarray: shape + dtype + raw C-order buffer. */
export class NDArray {
  shape: number[] = [];
  dtype: DType | null = null;
  fortran = false;
  raw: Uint8Array = new Uint8Array(0);

  /** state = (version, shape, dtype, isFortran, raw) — version absent in very old pickles */
  __setstate__(state: unknown): void {
    if (!Array.isArray(state)) throw new PickleError("unexpected ndarray state");
    const fields = state.length === 5 ? state.slice(1) : state;
    if (fields.length !== 4) throw new PickleError("unexpected ndarray state length");
    const [shape, dtype, fortran, raw] = fields as [unknown, unknown, unknown, RawData];
    if (!Array.isArray(shape) || !shape.every((d) => Number.isInteger(d))) {
      throw new PickleError("ndarray shape is not a tuple of ints");
    }
    if (!(dtype instanceof DType)) throw new PickleError("ndarray state has no dtype");
    this.shape = shape as number[];
    this.dtype = dtype;
    this.fortran = Boolean(fortran);
    this.raw = typeof raw === "string" ? latin1Bytes(raw) : raw;
    if (!(this.raw instanceof Uint8Array)) {
      throw new PickleError("ndarray data is neither str nor bytes");
    }
    const count = this.shape.reduce((a, b) => a * b, 1);
    if (count * dtype.itemsize !== this.raw.length) {
      throw new PickleError(
        `ndarray buffer is ${this.raw.length} bytes, expected ` +
          `${count} x ${dtype.itemsize} for shape [${this.shape.join(", ")}]`,
      );
    }
  }

  get size(): number {
    return this.shape.reduce((a, b) => a * b, 1);
  }

  /** Flat C-order numeric view. */
  toNumberArray(): number[] {
    const dt = this.dtype;
    if (dt === null) throw new PickleError("ndarray has no dtype");
    if (this.fortran && this.shape.length > 1) {
      throw new PickleError("Fortran-order arrays are not supported");
    }
    const view = new DataView(this.raw.buffer, this.raw.byteOffset, this.raw.byteLength);
    const le = dt.littleEndian;
    const n = this.size;
    const out = new Array<number>(n);
    const key = dt.kind + String(dt.itemsize);
    for (let i = 0; i < n; i++) {
      const at = i * dt.itemsize;
      switch (key) {
        case "f4": out[i] = view.getFloat32(at, le); break;
        case "f8": out[i] = view.getFloat64(at, le); break;
        case "i1": out[i] = view.getInt8(at); break;
        case "i2": out[i] = view.getInt16(at, le); break;
        case "i4": out[i] = view.getInt32(at, le); break;
        case "i8": out[i] = safeBig(view.getBigInt64(at, le)); break;
        case "u1": case "b1": out[i] = view.getUint8(at); break;
        case "u2": out[i] = view.getUint16(at, le); break;
        case "u4": out[i] = view.getUint32(at, le); break;
        case "u8": out[i] = safeBig(view.getBigUint64(at, le)); break;
        default:
          throw new PickleError(`cannot decode numpy dtype '${dt.descr}'`);
      }
    }
    return out;
  }
}

function safeBig(v: bigint): number {
  const n = Number(v);
  if (!Number.isSafeInteger(n)) throw new PickleError(`integer ${v} exceeds the safe JS range`);
  return n;
}

/** Minimal scipy CSR matrix. */
export class MinimalSparseCSR {
  rows = 0;
  cols = 0;
  data: NDArray | null = null;
  indices: NDArray | null = null;
  indptr: NDArray | null = null;

  /** state is the instance __dict__: {_shape, data, indices, indptr, ...} */
  __setstate__(state: unknown): void {
    if (!(state instanceof Map)) throw new PickleError("unexpected csr_matrix state");
    const shape = state.get("_shape");
    if (!Array.isArray(shape) || shape.length !== 2) {
      throw new PickleError("csr_matrix state has no 2-tuple _shape");
    }
    this.rows = Number(shape[0]);
    this.cols = Number(shape[1]);
    for (const field of ["data", "indices", "indptr"] as const) {
      const arr = state.get(field);
      if (!(arr instanceof NDArray)) {
        throw new PickleError(`csr_matrix state field '${field}' is not an ndarray`);
      }
      this[field] = arr;
    }
  }

  /** Expand to a dense row-major Float32Array of shape rows x cols. */
  toDenseFloat32(): Float32Array {
    const data = this.data!.toNumberArray();
    const indices = this.indices!.toNumberArray();
    const indptr = this.indptr!.toNumberArray();
    if (indptr.length !== this.rows + 1) {
      throw new PickleError(
        `csr indptr has ${indptr.length} entries, expected ${this.rows + 1}`,
      );
    }
    const out = new Float32Array(this.rows * this.cols);
    for (let i = 0; i < this.rows; i++) {
      for (let k = indptr[i]!; k < indptr[i + 1]!; k++) {
        const j = indices[k]!;
        if (j < 0 || j >= this.cols) {
          throw new PickleError(`csr column index ${j} out of range [0, ${this.cols})`);
        }
        out[i * this.cols + j] = Math.fround(data[k]!);
      }
    }
    return out;
  }
}

function global(
  module: string,
  name: string,
  impl: Partial<Pick<PyGlobal, "call" | "newobj">>,
): PyGlobal {
  const refuse = (verb: string) => () => {
    throw new PickleError(`${module}.${name} cannot be ${verb} here`);
  };
  return {
    module,
    name,
    call: impl.call ?? refuse("called"),
    newobj: impl.newobj ?? refuse("instantiated"),
  };
}

/**
 * Resolver covering everything a Planetoid pickle references, under both
 * the Python 2-era module paths and the renamed modern ones.
 */
export function planetoidResolver(module: string, name: string): PyGlobal {
  const key = `${module}.${name}`;
  switch (key) {
    case "numpy.core.multiarray._reconstruct":
    case "numpy._core.multiarray._reconstruct":
      // _reconstruct(ndarray_cls, (0,), 'b') -> blank array, filled by BUILD
      return global(module, name, { call: () => new NDArray() });
    case "numpy.ndarray":
      return global(module, name, { newobj: () => new NDArray() });
    case "numpy.dtype":
    case "numpy.core.multiarray.dtype":
      return global(module, name, {
        call: (args) => {
          if (typeof args[0] !== "string") throw new PickleError("numpy.dtype of a non-string");
          return new DType(args[0]);
        },
      });
    case "scipy.sparse.csr.csr_matrix":
    case "scipy.sparse._csr.csr_matrix":
    case "scipy.sparse.csr_matrix":
      return global(module, name, {
        call: () => new MinimalSparseCSR(),
        newobj: () => new MinimalSparseCSR(),
      });
    case "collections.defaultdict":
      // ignore the default factory: consumers only read existing keys
      return global(module, name, { call: () => new Map() });
    case "copy_reg._reconstructor":
    case "copyreg._reconstructor":
      return global(module, name, {
        call: (args) => {
          const cls = args[0] as PyGlobal;
          if (!cls || typeof cls.newobj !== "function") {
            throw new PickleError("_reconstructor with a non-class argument");
          }
          return cls.newobj([]);
        },
      });
    case "_codecs.encode":
      return global(module, name, {
        call: (args) => {
          const [s, enc] = args;
          if (typeof s !== "string") throw new PickleError("_codecs.encode of a non-string");
          if (enc !== "latin1" && enc !== "latin-1" && enc !== "latin_1") {
            throw new PickleError(`_codecs.encode with unsupported encoding '${String(enc)}'`);
          }
          return latin1Bytes(s);
        },
      });
    case "__builtin__.list":
    case "builtins.list":
      return global(module, name, {
        call: (args) => (args.length === 0 ? [] : Array.from(args[0] as Iterable<unknown>)),
      });
    case "__builtin__.object":
    case "builtins.object":
      // appears only as the base-class argument to _reconstructor
      return global(module, name, { newobj: () => new Map() });
    case "__builtin__.set":
    case "builtins.set":
      return global(module, name, {
        call: (args) => new Set(args.length === 0 ? [] : (args[0] as Iterable<unknown>)),
      });
    default:
      throw new PickleError(`pickle references unsupported global ${key}`);
  }
}
