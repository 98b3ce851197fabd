import type { Geometry, JobSnapshot, PickRow, Roi } from './types'

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string
  ) {
    super(detail)
  }
}

type FetchFn = typeof fetch

/**
 * Thin typed client for the job API. All numbers displayed anywhere in the
 * UI come straight out of these responses; nothing is recomputed client
 * side. The fetch function is injectable so contract tests can stub the
 * whole server.
 */
export class ApiClient {
  constructor(
    readonly baseUrl: string = '',
    private readonly fetchFn: FetchFn = (...args) => globalThis.fetch(...args)
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body !== undefined ? { 'content-type': 'application/json' } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined
    })
    if (!res.ok) {
      let detail = res.statusText
      try {
        const data = await res.json()
        if (data && typeof data.detail === 'string') detail = data.detail
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, detail)
    }
    return (await res.json()) as T
  }

  registerVolume(source: Record<string, unknown>): Promise<{ session: string; geometry: Geometry }> {
    return this.request('POST', '/volume', source)
  }

  sliceUrl(session: string, z: number, layer: string, window?: [number, number]): string {
    const params = new URLSearchParams({ session, layer })
    if (window) params.set('window', `${window[0]},${window[1]}`)
    return `${this.baseUrl}/slice/${z}?${params.toString()}`
  }

  putRoi(session: string, roi: Roi): Promise<{ roi: Roi }> {
    return this.request('PUT', `/roi?session=${session}`, roi)
  }

  getRoi(session: string): Promise<{ roi: Roi | null }> {
    return this.request('GET', `/roi?session=${session}`)
  }

  putTrainingTable(session: string, rows: Omit<PickRow, 'color'>[]): Promise<{ rows: number }> {
    return this.request('PUT', `/training-table?session=${session}`, { rows })
  }

  getTrainingTable(session: string): Promise<{ rows: Omit<PickRow, 'color'>[] }> {
    return this.request('GET', `/training-table?session=${session}`)
  }

  postJob(session: string, kind: string, params: Record<string, unknown>): Promise<{ job: string }> {
    return this.request('POST', `/jobs?session=${session}`, { kind, params })
  }

  getJob(jobId: string): Promise<JobSnapshot> {
    return this.request('GET', `/jobs/${jobId}`)
  }

  cancelJob(jobId: string): Promise<{ job: string; state: string }> {
    return this.request('DELETE', `/jobs/${jobId}`)
  }

  getMetrics<T>(session: string, labels: string, op: string, extra?: Record<string, string>): Promise<T> {
    const params = new URLSearchParams({ session, op, ...extra })
    return this.request('GET', `/metrics/${labels}?${params.toString()}`)
  }

  exportUrl(session: string, artifact: string, format: string): string {
    const params = new URLSearchParams({ session, format })
    return `${this.baseUrl}/export/${artifact}?${params.toString()}`
  }

  async downloadText(url: string): Promise<string> {
    const res = await this.fetchFn(url)
    if (!res.ok) throw new ApiError(res.status, res.statusText)
    return res.text()
  }
}
