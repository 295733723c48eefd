/* tslint:disable */
/* eslint-disable */

export class Frontalization {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    frontal_rgba(): Uint8Array;
    raw_rgba(): Uint8Array;
    readonly height: number;
    readonly ppi_x_max: number;
    readonly ppi_x_min: number;
    readonly rms_px: number;
    readonly width: number;
}

export class Presentation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    direct_rgba(): Uint8Array;
    ftir_rgba(): Uint8Array;
    /**
     * FTIR-view LBP histogram (empty when the gate rejects the presentation).
     */
    lbp(): Float64Array;
    readonly accepted: boolean;
    readonly direct_height: number;
    readonly direct_width: number;
    readonly ftir_height: number;
    readonly ftir_width: number;
    readonly gate_statistic: number;
}

/**
 * Renders a 6x8 board seen through a keystone whose raw x resolution runs
 * from `ppi_left` to `ppi_right`, then recovers and undoes the distortion.
 */
export function frontalize(ppi_left: number, ppi_right: number): Frontalization;

/**
 * Placement report as JSON.
 */
export function geometry(n_glass: number, n_air: number, theta_direct_deg: number, theta_ftir_deg: number): string;

/**
 * Material names accepted by [`present`], comma separated.
 */
export function materials(): string;

/**
 * Renders a live finger (empty `material`) or a spoof of the named material,
 * gates it and extracts the FTIR LBP histogram.
 */
export function present(material: string, seed: number, subject: number, pressure: number, rotation_deg: number): Presentation;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_frontalization_free: (a: number, b: number) => void;
    readonly __wbg_presentation_free: (a: number, b: number) => void;
    readonly frontalization_frontal_rgba: (a: number) => [number, number];
    readonly frontalization_height: (a: number) => number;
    readonly frontalization_ppi_x_max: (a: number) => number;
    readonly frontalization_ppi_x_min: (a: number) => number;
    readonly frontalization_raw_rgba: (a: number) => [number, number];
    readonly frontalization_rms_px: (a: number) => number;
    readonly frontalization_width: (a: number) => number;
    readonly frontalize: (a: number, b: number) => [number, number, number];
    readonly geometry: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly materials: () => [number, number];
    readonly present: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly presentation_accepted: (a: number) => number;
    readonly presentation_direct_height: (a: number) => number;
    readonly presentation_direct_rgba: (a: number) => [number, number];
    readonly presentation_direct_width: (a: number) => number;
    readonly presentation_ftir_rgba: (a: number) => [number, number];
    readonly presentation_lbp: (a: number) => [number, number];
    readonly presentation_ftir_height: (a: number) => number;
    readonly presentation_ftir_width: (a: number) => number;
    readonly presentation_gate_statistic: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
