/* tslint:disable */
/* eslint-disable */

/**
 * Splits the left side of the equation into monotone branches on `[lo, hi]`.
 */
export function branches(text: string, params: string, lo: number, hi: number): string;

/**
 * Fits a superposition of one to three variables over the unit cube. For two
 * variables the result includes a heatmap of the target and the fit.
 */
export function decompose(text: string, grid: number, iters: number): string;

/**
 * Solves `text` (for example `pow(add(x,a),mul(x,b)) = c`) for its one
 * unknown on `[lo, hi]`. `params` is a JSON object such as `{"a":1,"b":1,"c":9}`.
 * The result carries the solver report, the target value and a sampled curve
 * of the left side.
 */
export function solve(text: string, params: string, lo: number, hi: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly branches: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly decompose: (a: number, b: number, c: number, d: number) => [number, number];
    readonly solve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
