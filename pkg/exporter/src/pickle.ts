/**
 * Minimal unpickler for the Python pickle format.
 *
 * Covers the full protocol 0-2 opcode surface that Python 2 picklers
 * emitted, plus the cheap protocol 3/4 opcodes (frames, stack globals,
 * binary bytes) so files re-pickled by Python 3 load too. Anything
 * outside that set raises instead of guessing: these files feed binary
 * tensors, and silent corruption is worse than a loud failure.
 *
 * Python 2 byte strings (STRING/BINSTRING) are returned as JS strings
 * decoded latin1, which is a lossless byte <-> code point mapping;
 * consumers that want raw bytes re-encode with `latin1Bytes`. True
 * bytes objects (protocol 3+, or the `_codecs.encode` reduce that
 * protocol <= 2 uses) come back as Uint8Array. Dicts come back as Map
 * so integer keys survive.
 */

export class PickleError extends Error {}

/** A resolved Python global: callable for REDUCE, allocatable for NEWOBJ. */
export interface PyGlobal {
  readonly module: string;
  readonly name: string;
  call(args: unknown[]): unknown;
  newobj(args: unknown[]): unknown;
}

export type GlobalResolver = (module: string, name: string) => PyGlobal;

/** Objects that take part in the BUILD opcode implement this. */
export interface Settable {
  __setstate__(state: unknown): void;
}

function hasSetstate(obj: unknown): obj is Settable {
  return (
    typeof obj === "object" &&
    obj !== null &&
    typeof (obj as Settable).__setstate__ === "function"
  );
}

/** latin1-decode, one code point per byte. */
export function latin1(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i++) out += String.fromCharCode(bytes[i]!);
  return out;
}

/** Inverse of `latin1`; throws on code points above 0xff. */
export function latin1Bytes(s: string): Uint8Array {
  const out = new Uint8Array(s.length);
  for (let i = 0; i < s.length; i++) {
    const c = s.charCodeAt(i);
    if (c > 0xff) throw new PickleError(`non-latin1 code point ${c} in byte string`);
    out[i] = c;
  }
  return out;
}

const utf8 = new TextDecoder("utf-8", { fatal: true });

/** Python 2 repr-style escapes inside a STRING opcode body. */
function unescapePyString(body: string): string {
  let out = "";
  for (let i = 0; i < body.length; i++) {
    const c = body[i]!;
    if (c !== "\\") {
      out += c;
      continue;
    }
    const e = body[++i];
    if (e === undefined) throw new PickleError("dangling backslash in STRING");
    switch (e) {
      case "\\": out += "\\"; break;
      case "'": out += "'"; break;
      case '"': out += '"'; break;
      case "n": out += "\n"; break;
      case "r": out += "\r"; break;
      case "t": out += "\t"; break;
      case "b": out += "\b"; break;
      case "f": out += "\f"; break;
      case "v": out += "\v"; break;
      case "a": out += "\x07"; break;
      case "0": {
        // repr() never emits multi-digit octal escapes; refuse rather than misparse
        if (/[0-7]/.test(body[i + 1] ?? "")) {
          throw new PickleError("octal escapes in STRING are not supported");
        }
        out += "\x00";
        break;
      }
      case "x": {
        const hex = body.slice(i + 1, i + 3);
        if (!/^[0-9a-fA-F]{2}$/.test(hex)) {
          throw new PickleError(`bad \\x escape in STRING near index ${i}`);
        }
        out += String.fromCharCode(parseInt(hex, 16));
        i += 2;
        break;
      }
      default:
        throw new PickleError(`unknown escape \\${e} in STRING`);
    }
  }
  return out;
}

/** raw-unicode-escape: only \uXXXX and \UXXXXXXXX are escapes. */
function decodeRawUnicodeEscape(s: string): string {
  let out = "";
  for (let i = 0; i < s.length; i++) {
    const c = s[i]!;
    if (c === "\\" && s[i + 1] === "u" && /^[0-9a-fA-F]{4}$/.test(s.slice(i + 2, i + 6))) {
      out += String.fromCharCode(parseInt(s.slice(i + 2, i + 6), 16));
      i += 5;
    } else if (
      c === "\\" &&
      s[i + 1] === "U" &&
      /^[0-9a-fA-F]{8}$/.test(s.slice(i + 2, i + 10))
    ) {
      out += String.fromCodePoint(parseInt(s.slice(i + 2, i + 10), 16));
      i += 9;
    } else {
      out += c;
    }
  }
  return out;
}

function parseTextFloat(body: string): number {
  if (body === "inf") return Infinity;
  if (body === "-inf") return -Infinity;
  if (body === "nan") return NaN;
  const v = Number(body);
  if (Number.isNaN(v)) throw new PickleError(`bad FLOAT literal ${r(body)}`);
  return v;
}

// helper for error messages, repr-ish
function r(s: string): string {
  return JSON.stringify(s.length > 40 ? s.slice(0, 40) + "..." : s);
}

/** Little-endian two's-complement integer of arbitrary width. */
function longFromBytes(bytes: Uint8Array): number {
  if (bytes.length === 0) return 0;
  let v = 0n;
  for (let i = bytes.length - 1; i >= 0; i--) v = (v << 8n) | BigInt(bytes[i]!);
  const top = bytes[bytes.length - 1]!;
  if (top & 0x80) v -= 1n << BigInt(8 * bytes.length);
  return bigToNumber(v);
}

function bigToNumber(v: bigint): number {
  const n = Number(v);
  if (!Number.isSafeInteger(n)) {
    throw new PickleError(`integer ${v} exceeds the safe JS range`);
  }
  return n;
}

class Reader {
  pos = 0;
  private readonly view: DataView;

  constructor(readonly buf: Uint8Array) {
    this.view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  }

  u8(): number {
    if (this.pos >= this.buf.length) throw new PickleError("truncated pickle");
    return this.buf[this.pos++]!;
  }

  bytes(n: number): Uint8Array {
    if (this.pos + n > this.buf.length) throw new PickleError("truncated pickle");
    const out = this.buf.slice(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u16le(): number {
    const v = this.view.getUint16(this.need(2), true);
    return v;
  }

  i32le(): number {
    return this.view.getInt32(this.need(4), true);
  }

  u32le(): number {
    return this.view.getUint32(this.need(4), true);
  }

  u64le(): number {
    return bigToNumber(this.view.getBigUint64(this.need(8), true));
  }

  f64be(): number {
    return this.view.getFloat64(this.need(8), false);
  }

  /** Bytes up to (not including) the next newline, latin1-decoded. */
  line(): string {
    const start = this.pos;
    while (this.pos < this.buf.length && this.buf[this.pos] !== 0x0a) this.pos++;
    if (this.pos >= this.buf.length) throw new PickleError("unterminated line in pickle");
    return latin1(this.buf.subarray(start, this.pos++));
  }

  private need(n: number): number {
    if (this.pos + n > this.buf.length) throw new PickleError("truncated pickle");
    const at = this.pos;
    this.pos += n;
    return at;
  }
}

/** Parse one pickled object. Globals are looked up through `resolve`. */
export function unpickle(buf: Uint8Array, resolve: GlobalResolver): unknown {
  const rd = new Reader(buf);
  const stack: unknown[] = [];
  const marks: number[] = [];
  const memo = new Map<number, unknown>();

  const pop = (): unknown => {
    if (stack.length === 0) throw new PickleError("stack underflow");
    return stack.pop();
  };
  const top = (): unknown => {
    if (stack.length === 0) throw new PickleError("stack underflow");
    return stack[stack.length - 1];
  };
  const popMark = (): unknown[] => {
    const at = marks.pop();
    if (at === undefined) throw new PickleError("POP_MARK with no mark");
    return stack.splice(at);
  };
  const asList = (x: unknown): unknown[] => {
    if (!Array.isArray(x)) throw new PickleError("expected a list on the stack");
    return x;
  };
  const asGlobal = (x: unknown): PyGlobal => {
    const g = x as PyGlobal;
    if (!g || typeof g.call !== "function" || typeof g.newobj !== "function") {
      throw new PickleError("expected a global on the stack");
    }
    return g;
  };
  const setItems = (target: unknown, pairs: unknown[]): void => {
    if (!(target instanceof Map)) throw new PickleError("SETITEM target is not a dict");
    for (let i = 0; i + 1 < pairs.length; i += 2) target.set(pairs[i], pairs[i + 1]);
  };
  const build = (obj: unknown, state: unknown): unknown => {
    if (hasSetstate(obj)) {
      obj.__setstate__(state);
      return obj;
    }
    if (obj instanceof Map && state instanceof Map) {
      for (const [k, v] of state) obj.set(k, v);
      return obj;
    }
    throw new PickleError("BUILD on an object with no __setstate__");
  };

  for (;;) {
    const op = rd.u8();
    switch (op) {
      case 0x80: { // PROTO
        const v = rd.u8();
        if (v > 5) throw new PickleError(`unsupported pickle protocol ${v}`);
        break;
      }
      case 0x95: rd.bytes(8); break; // FRAME: length hint only
      case 0x2e: return pop(); // STOP

      // ------------------------------------------------- stack plumbing
      case 0x28: marks.push(stack.length); break; // MARK
      case 0x30: pop(); break; // POP
      case 0x31: popMark(); break; // POP_MARK
      case 0x32: stack.push(top()); break; // DUP

      // ------------------------------------------------------- scalars
      case 0x4e: stack.push(null); break; // NONE
      case 0x88: stack.push(true); break; // NEWTRUE
      case 0x89: stack.push(false); break; // NEWFALSE
      case 0x49: { // INT (also py2 booleans)
        const body = rd.line();
        if (body === "00") stack.push(false);
        else if (body === "01") stack.push(true);
        else {
          const v = Number(body);
          if (!Number.isSafeInteger(v)) throw new PickleError(`bad INT literal ${r(body)}`);
          stack.push(v);
        }
        break;
      }
      case 0x4c: { // LONG, trailing L optional
        let body = rd.line();
        if (body.endsWith("L")) body = body.slice(0, -1);
        if (!/^-?[0-9]+$/.test(body)) throw new PickleError(`bad LONG literal ${r(body)}`);
        stack.push(bigToNumber(BigInt(body)));
        break;
      }
      case 0x4a: stack.push(rd.i32le()); break; // BININT
      case 0x4b: stack.push(rd.u8()); break; // BININT1
      case 0x4d: stack.push(rd.u16le()); break; // BININT2
      case 0x8a: stack.push(longFromBytes(rd.bytes(rd.u8()))); break; // LONG1
      case 0x8b: stack.push(longFromBytes(rd.bytes(rd.u32le()))); break; // LONG4
      case 0x46: stack.push(parseTextFloat(rd.line())); break; // FLOAT
      case 0x47: stack.push(rd.f64be()); break; // BINFLOAT

      // ------------------------------------------------------- strings
      case 0x53: { // STRING: quoted, repr-escaped
        const body = rd.line();
        const q = body[0];
        if ((q !== "'" && q !== '"') || body[body.length - 1] !== q || body.length < 2) {
          throw new PickleError(`badly quoted STRING ${r(body)}`);
        }
        stack.push(unescapePyString(body.slice(1, -1)));
        break;
      }
      case 0x54: stack.push(latin1(rd.bytes(rd.u32le()))); break; // BINSTRING
      case 0x55: stack.push(latin1(rd.bytes(rd.u8()))); break; // SHORT_BINSTRING
      case 0x56: stack.push(decodeRawUnicodeEscape(rd.line())); break; // UNICODE
      case 0x58: stack.push(utf8.decode(rd.bytes(rd.u32le()))); break; // BINUNICODE
      case 0x8c: stack.push(utf8.decode(rd.bytes(rd.u8()))); break; // SHORT_BINUNICODE
      case 0x8d: stack.push(utf8.decode(rd.bytes(rd.u64le()))); break; // BINUNICODE8
      case 0x42: stack.push(rd.bytes(rd.u32le())); break; // BINBYTES
      case 0x43: stack.push(rd.bytes(rd.u8())); break; // SHORT_BINBYTES
      case 0x8e: stack.push(rd.bytes(rd.u64le())); break; // BINBYTES8

      // ---------------------------------------------------- containers
      case 0x29: stack.push([]); break; // EMPTY_TUPLE
      case 0x74: stack.push(popMark()); break; // TUPLE
      case 0x85: stack.push([pop()]); break; // TUPLE1
      case 0x86: { const b = pop(); const a = pop(); stack.push([a, b]); break; } // TUPLE2
      case 0x87: { const c = pop(); const b = pop(); const a = pop(); stack.push([a, b, c]); break; } // TUPLE3
      case 0x5d: stack.push([]); break; // EMPTY_LIST
      case 0x6c: stack.push(popMark()); break; // LIST
      case 0x61: { const v = pop(); asList(top()).push(v); break; } // APPEND
      case 0x65: { const items = popMark(); asList(top()).push(...items); break; } // APPENDS
      case 0x7d: stack.push(new Map()); break; // EMPTY_DICT
      case 0x64: { // DICT
        const m = new Map();
        setItems(m, popMark());
        stack.push(m);
        break;
      }
      case 0x73: { const v = pop(); const k = pop(); setItems(top(), [k, v]); break; } // SETITEM
      case 0x75: { const items = popMark(); setItems(top(), items); break; } // SETITEMS

      // ------------------------------------------------------- memoing
      case 0x67: { // GET
        const idx = Number(rd.line());
        if (!memo.has(idx)) throw new PickleError(`GET of unset memo slot ${idx}`);
        stack.push(memo.get(idx));
        break;
      }
      case 0x68: { const i = rd.u8(); if (!memo.has(i)) throw new PickleError(`BINGET of unset memo slot ${i}`); stack.push(memo.get(i)); break; }
      case 0x6a: { const i = rd.u32le(); if (!memo.has(i)) throw new PickleError(`LONG_BINGET of unset memo slot ${i}`); stack.push(memo.get(i)); break; }
      case 0x70: memo.set(Number(rd.line()), top()); break; // PUT
      case 0x71: memo.set(rd.u8(), top()); break; // BINPUT
      case 0x72: memo.set(rd.u32le(), top()); break; // LONG_BINPUT
      case 0x94: memo.set(memo.size, top()); break; // MEMOIZE

      // ------------------------------------------------------- objects
      case 0x63: { // GLOBAL
        const module = rd.line();
        const name = rd.line();
        stack.push(resolve(module, name));
        break;
      }
      case 0x93: { // STACK_GLOBAL
        const name = pop();
        const module = pop();
        if (typeof module !== "string" || typeof name !== "string") {
          throw new PickleError("STACK_GLOBAL expects two strings");
        }
        stack.push(resolve(module, name));
        break;
      }
      case 0x52: { // REDUCE
        const args = asList(pop());
        stack.push(asGlobal(pop()).call(args));
        break;
      }
      case 0x81: { // NEWOBJ
        const args = asList(pop());
        stack.push(asGlobal(pop()).newobj(args));
        break;
      }
      case 0x92: { // NEWOBJ_EX
        const kwargs = pop();
        const args = asList(pop());
        if (!(kwargs instanceof Map) || kwargs.size > 0) {
          throw new PickleError("NEWOBJ_EX with keyword arguments is not supported");
        }
        stack.push(asGlobal(pop()).newobj(args));
        break;
      }
      case 0x62: { // BUILD
        const state = pop();
        stack.push(build(pop(), state));
        break;
      }

      default:
        throw new PickleError(
          `unsupported pickle opcode 0x${op.toString(16).padStart(2, "0")} at offset ${rd.pos - 1}`,
        );
    }
  }
}
