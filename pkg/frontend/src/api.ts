// Typed client for the four read-only endpoints of the map server.

export interface Meta {
    n: number
    d: number
    score_min: number
    score_max: number
    bbox: [number, number, number, number]
    diverging: boolean
}

export interface ContourGrid {
    bbox: [number, number, number, number]
    nw: number
    nh: number
    values: number[] // row-major, nh rows of nw cells
    mask: boolean[]
    score_min: number
    score_max: number
}

export interface PointRec {
    id: string
    x: number
    y: number
    score: number
}

export interface PointDetail extends PointRec {
    meta: string
}

export interface ContourRequest {
    xmin: number
    xmax: number
    ymin: number
    ymax: number
    nw: number
    nh: number
}

export interface PointsRequest {
    method: 'random' | 'poisson'
    count?: number
    radius?: number
    seed?: number
    xmin: number
    xmax: number
    ymin: number
    ymax: number
}

export type FetchLike = (url: string) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>

export class ApiClient {
    constructor(
        private readonly base: string,
        private readonly fetchFn: FetchLike = (url) => fetch(url),
    ) {}

    private async get<T>(path: string, params?: Record<string, string | number>): Promise<T> {
        let url = this.base + path
        if (params) {
            const q = new URLSearchParams()
            for (const [k, v] of Object.entries(params)) q.set(k, String(v))
            url += '?' + q.toString()
        }
        const res = await this.fetchFn(url)
        if (!res.ok) throw new Error(`${path} failed with status ${res.status}`)
        return (await res.json()) as T
    }

    meta(): Promise<Meta> {
        return this.get<Meta>('/meta')
    }

    contour(req: ContourRequest): Promise<ContourGrid> {
        return this.get<ContourGrid>('/contour', { ...req })
    }

    points(req: PointsRequest): Promise<PointRec[]> {
        const params: Record<string, string | number> = {
            method: req.method,
            xmin: req.xmin,
            xmax: req.xmax,
            ymin: req.ymin,
            ymax: req.ymax,
            seed: req.seed ?? 0,
        }
        if (req.method === 'random') params.count = req.count ?? 500
        else params.radius = req.radius ?? 0.02
        return this.get<PointRec[]>('/points', params)
    }

    point(id: string): Promise<PointDetail> {
        return this.get<PointDetail>(`/point/${encodeURIComponent(id)}`)
    }
}
