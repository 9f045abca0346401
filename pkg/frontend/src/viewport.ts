// Viewport state and the contour request loop: debounced settle, grid
// resolution proportional to zoom, one in-flight request, stale responses
// discarded by generation counter.

import type { ContourGrid, ContourRequest } from './api.js'

export interface Bbox {
    xmin: number
    xmax: number
    ymin: number
    ymax: number
}

export const FULL_EXTENT: Bbox = { xmin: 0, xmax: 1, ymin: 0, ymax: 1 }

export const MIN_GRID = 64
export const MAX_GRID = 1000
export const DEFAULT_BASE_NW = 128
export const SETTLE_MS = 150

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v))

export function bboxWidth(b: Bbox): number {
    return b.xmax - b.xmin
}

/** Grid cells per axis: proportional to 1/extent, clamped to [64, 1000]. */
export function gridResolution(b: Bbox, baseNw = DEFAULT_BASE_NW): { nw: number; nh: number } {
    const nw = clamp(Math.round(baseNw / (b.xmax - b.xmin)), MIN_GRID, MAX_GRID)
    const nh = clamp(Math.round(baseNw / (b.ymax - b.ymin)), MIN_GRID, MAX_GRID)
    return { nw, nh }
}

/** Zoom keeping the focus point (fx, fy in bbox coordinates) fixed. */
export function zoomAround(b: Bbox, fx: number, fy: number, factor: number): Bbox {
    const w = (b.xmax - b.xmin) * factor
    const h = (b.ymax - b.ymin) * factor
    return {
        xmin: fx - (fx - b.xmin) * factor,
        xmax: fx - (fx - b.xmin) * factor + w,
        ymin: fy - (fy - b.ymin) * factor,
        ymax: fy - (fy - b.ymin) * factor + h,
    }
}

export function pan(b: Bbox, dx: number, dy: number): Bbox {
    return { xmin: b.xmin + dx, xmax: b.xmax + dx, ymin: b.ymin + dy, ymax: b.ymax + dy }
}

export interface ViewportLoopOptions {
    fetchContour: (req: ContourRequest) => Promise<ContourGrid>
    onGrid: (grid: ContourGrid, bbox: Bbox) => void
    onSettled?: (bbox: Bbox) => void
    onError?: (err: unknown) => void
    baseNw?: number
    debounceMs?: number
    setTimer?: (fn: () => void, ms: number) => unknown
    clearTimer?: (handle: unknown) => void
}

/**
 * Debounces viewport changes, issues at most one contour request per
 * settle, and drops responses that arrive for a superseded viewport.
 */
export class ViewportLoop {
    private bbox: Bbox = { ...FULL_EXTENT }
    private generation = 0
    private timer: unknown = null
    private readonly baseNw: number
    private readonly debounceMs: number
    private readonly setTimer: (fn: () => void, ms: number) => unknown
    private readonly clearTimer: (handle: unknown) => void

    constructor(private readonly opts: ViewportLoopOptions) {
        this.baseNw = opts.baseNw ?? DEFAULT_BASE_NW
        this.debounceMs = opts.debounceMs ?? SETTLE_MS
        this.setTimer = opts.setTimer ?? ((fn, ms) => setTimeout(fn, ms))
        this.clearTimer = opts.clearTimer ?? ((h) => clearTimeout(h as number))
    }

    current(): Bbox {
        return { ...this.bbox }
    }

    /** Move the viewport; the fetch fires after the debounce settles. */
    setBbox(b: Bbox): void {
        this.bbox = { ...b }
        if (this.timer !== null) this.clearTimer(this.timer)
        this.timer = this.setTimer(() => {
            this.timer = null
            this.issue()
        }, this.debounceMs)
    }

    /** Fetch immediately for the current viewport (initial load). */
    refresh(): void {
        if (this.timer !== null) {
            this.clearTimer(this.timer)
            this.timer = null
        }
        this.issue()
    }

    private issue(): void {
        const gen = ++this.generation
        const b = { ...this.bbox }
        const { nw, nh } = gridResolution(b, this.baseNw)
        this.opts.onSettled?.(b)
        this.opts
            .fetchContour({ xmin: b.xmin, xmax: b.xmax, ymin: b.ymin, ymax: b.ymax, nw, nh })
            .then((grid) => {
                if (gen === this.generation) this.opts.onGrid(grid, b)
            })
            .catch((err) => {
                if (gen === this.generation) this.opts.onError?.(err)
            })
    }
}
