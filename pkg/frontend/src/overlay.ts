// Point-overlay state: fetches sampled points for the visible bbox when
// enabled, refetching exactly once per parameter or viewport change.

import type { PointRec, PointsRequest } from './api.js'
import type { Bbox } from './viewport.js'

export type SamplingMethod = 'random' | 'poisson'

export interface OverlayOptions {
    fetchPoints: (req: PointsRequest) => Promise<PointRec[]>
    onPoints: (points: PointRec[]) => void
    onError?: (err: unknown) => void
}

export class OverlayController {
    enabled = false
    method: SamplingMethod = 'random'
    count = 500
    radius = 0.02
    seed = 0
    private bbox: Bbox = { xmin: 0, xmax: 1, ymin: 0, ymax: 1 }
    private generation = 0

    constructor(private readonly opts: OverlayOptions) {}

    setEnabled(on: boolean): void {
        if (on === this.enabled) return
        this.enabled = on
        if (on) this.refetch()
        else {
            this.generation++ // discard any in-flight response
            this.opts.onPoints([])
        }
    }

    setMethod(method: SamplingMethod): void {
        this.method = method
        if (this.enabled) this.refetch()
    }

    setCount(count: number): void {
        this.count = count
        if (this.enabled && this.method === 'random') this.refetch()
    }

    setRadius(radius: number): void {
        this.radius = radius
        if (this.enabled && this.method === 'poisson') this.refetch()
    }

    /** Viewport settled; only refetches while the overlay is shown. */
    viewportSettled(bbox: Bbox): void {
        this.bbox = { ...bbox }
        if (this.enabled) this.refetch()
    }

    private refetch(): void {
        const gen = ++this.generation
        const req: PointsRequest = {
            method: this.method,
            seed: this.seed,
            xmin: this.bbox.xmin,
            xmax: this.bbox.xmax,
            ymin: this.bbox.ymin,
            ymax: this.bbox.ymax,
        }
        if (this.method === 'random') req.count = this.count
        else req.radius = this.radius
        this.opts
            .fetchPoints(req)
            .then((pts) => {
                if (gen === this.generation) this.opts.onPoints(pts)
            })
            .catch((err) => {
                if (gen === this.generation) this.opts.onError?.(err)
            })
    }
}

/** Nearest visible point within a pixel radius, for hover and click. */
export function hitTest(
    points: PointRec[],
    bbox: Bbox,
    canvasW: number,
    canvasH: number,
    px: number,
    py: number,
    radiusPx = 8,
): PointRec | null {
    let best: PointRec | null = null
    let bestD2 = radiusPx * radiusPx
    for (const p of points) {
        const cx = ((p.x - bbox.xmin) / (bbox.xmax - bbox.xmin)) * canvasW
        const cy = (1 - (p.y - bbox.ymin) / (bbox.ymax - bbox.ymin)) * canvasH
        const d2 = (cx - px) * (cx - px) + (cy - py) * (cy - py)
        if (d2 <= bestD2) {
            bestD2 = d2
            best = p
        }
    }
    return best
}
