/* tslint:disable */
/* eslint-disable */

/**
 * The single-target crowd that leaves the domain once its members stop.
 */
export class Crowd {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Density of the crowd still heading for the target.
     */
    density(level: number): Float64Array;
    /**
     * Live mass over the initial mass.
     */
    live_fraction(level: number): number;
    n_levels(): number;
    /**
     * Solves and transports the bundled crowd; `dx = 0` keeps its mesh.
     */
    constructor(dx: number);
    nodes_per_axis(): Uint32Array;
    time(level: number): number;
}

/**
 * Value functions and feedback on the three-target ring.
 */
export class Ring {
    free(): void;
    [Symbol.dispose](): void;
    lower(): Float64Array;
    n_levels(): number;
    n_targets(): number;
    /**
     * Solves the ring problem at mesh width `dx`; `dt` keeps the bundled ratio.
     */
    constructor(dx: number);
    nodes_per_axis(): Uint32Array;
    /**
     * Target centers, flattened as `x, y` pairs.
     */
    targets(): Float64Array;
    time(level: number): number;
    /**
     * Optimal path from `(x, y)` in state `bits`, flattened as
     * `t, x, y, bits` records.
     */
    trajectory(x: number, y: number, bits: number): Float64Array;
    upper(): Float64Array;
    /**
     * `V(·, t_level, p)` with `p` given by its bit pattern.
     */
    value(level: number, bits: number): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_crowd_free: (a: number, b: number) => void;
    readonly __wbg_ring_free: (a: number, b: number) => void;
    readonly crowd_density: (a: number, b: number) => [number, number, number, number];
    readonly crowd_live_fraction: (a: number, b: number) => number;
    readonly crowd_n_levels: (a: number) => number;
    readonly crowd_new: (a: number) => [number, number, number];
    readonly crowd_nodes_per_axis: (a: number) => [number, number];
    readonly crowd_time: (a: number, b: number) => number;
    readonly ring_lower: (a: number) => [number, number];
    readonly ring_n_levels: (a: number) => number;
    readonly ring_n_targets: (a: number) => number;
    readonly ring_new: (a: number) => [number, number, number];
    readonly ring_nodes_per_axis: (a: number) => [number, number];
    readonly ring_targets: (a: number) => [number, number];
    readonly ring_time: (a: number, b: number) => number;
    readonly ring_trajectory: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly ring_upper: (a: number) => [number, number];
    readonly ring_value: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
