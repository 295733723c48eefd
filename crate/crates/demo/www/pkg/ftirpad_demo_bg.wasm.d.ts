/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_frontalization_free: (a: number, b: number) => void;
export const __wbg_presentation_free: (a: number, b: number) => void;
export const frontalization_frontal_rgba: (a: number) => [number, number];
export const frontalization_height: (a: number) => number;
export const frontalization_ppi_x_max: (a: number) => number;
export const frontalization_ppi_x_min: (a: number) => number;
export const frontalization_raw_rgba: (a: number) => [number, number];
export const frontalization_rms_px: (a: number) => number;
export const frontalization_width: (a: number) => number;
export const frontalize: (a: number, b: number) => [number, number, number];
export const geometry: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const materials: () => [number, number];
export const present: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const presentation_accepted: (a: number) => number;
export const presentation_direct_height: (a: number) => number;
export const presentation_direct_rgba: (a: number) => [number, number];
export const presentation_direct_width: (a: number) => number;
export const presentation_ftir_rgba: (a: number) => [number, number];
export const presentation_lbp: (a: number) => [number, number];
export const presentation_ftir_height: (a: number) => number;
export const presentation_ftir_width: (a: number) => number;
export const presentation_gate_statistic: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
