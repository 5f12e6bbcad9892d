/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_crowd_free: (a: number, b: number) => void;
export const __wbg_ring_free: (a: number, b: number) => void;
export const crowd_density: (a: number, b: number) => [number, number, number, number];
export const crowd_live_fraction: (a: number, b: number) => number;
export const crowd_n_levels: (a: number) => number;
export const crowd_new: (a: number) => [number, number, number];
export const crowd_nodes_per_axis: (a: number) => [number, number];
export const crowd_time: (a: number, b: number) => number;
export const ring_lower: (a: number) => [number, number];
export const ring_n_levels: (a: number) => number;
export const ring_n_targets: (a: number) => number;
export const ring_new: (a: number) => [number, number, number];
export const ring_nodes_per_axis: (a: number) => [number, number];
export const ring_targets: (a: number) => [number, number];
export const ring_time: (a: number, b: number) => number;
export const ring_trajectory: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const ring_upper: (a: number) => [number, number];
export const ring_value: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
