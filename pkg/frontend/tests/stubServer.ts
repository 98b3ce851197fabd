import type { Geometry, JobSnapshot, PickRow, Roi } from '../src/types'

export interface RecordedRequest {
  method: string
  path: string
  body: unknown
}

export interface StubState {
  geometry: Geometry
  roi: Roi | null
  /** lets a test simulate server-side adjustment (clamping etc.) */
  roiTransform: (roi: Roi) => Roi
  table: Omit<PickRow, 'color'>[]
  jobScript: JobSnapshot[]
  jobCursor: number
  onCancel: (() => void) | null
  metrics: Record<string, unknown>
  exports: Record<string, string>
  requests: RecordedRequest[]
}

export const makeStub = (overrides: Partial<StubState> = {}) => {
  const state: StubState = {
    geometry: { nx: 64, ny: 64, nz: 8, bit_depth: 16, voxel_size: 1.0 },
    roi: null,
    roiTransform: (r) => r,
    table: [],
    jobScript: [],
    jobCursor: 0,
    onCancel: null,
    metrics: {},
    exports: {},
    requests: [],
    ...overrides
  }

  const json = (data: unknown, status = 200) =>
    new Response(JSON.stringify(data), {
      status,
      headers: { 'content-type': 'application/json' }
    })

  const fetchFn = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input), 'http://stub')
    const method = init?.method ?? 'GET'
    const body = init?.body ? JSON.parse(String(init.body)) : undefined
    state.requests.push({ method, path: url.pathname + url.search, body })

    if (method === 'POST' && url.pathname === '/volume') {
      return json({ session: 'stub-session', geometry: state.geometry })
    }
    if (url.pathname === '/roi') {
      if (method === 'PUT') {
        state.roi = state.roiTransform(body as Roi)
        return json({ roi: state.roi })
      }
      return json({ roi: state.roi })
    }
    if (url.pathname === '/training-table') {
      if (method === 'PUT') {
        const rows = (body as { rows: Omit<PickRow, 'color'>[] }).rows
        for (const r of rows) {
          if (r.x < 0 || r.x >= state.geometry.nx || r.y < 0 || r.y >= state.geometry.ny) {
            return json({ detail: `row out of bounds: (${r.x},${r.y})` }, 400)
          }
        }
        state.table = rows
        return json({ rows: rows.length })
      }
      return json({ rows: state.table })
    }
    if (method === 'POST' && url.pathname === '/jobs') {
      state.jobCursor = 0
      return json({ job: 'job-1' }, 202)
    }
    if (url.pathname.startsWith('/jobs/')) {
      if (method === 'DELETE') {
        state.onCancel?.()
        return json({ job: 'job-1', state: 'running' })
      }
      const i = Math.min(state.jobCursor, state.jobScript.length - 1)
      state.jobCursor += 1
      return json(state.jobScript[i])
    }
    if (url.pathname.startsWith('/metrics/')) {
      const labels = url.pathname.split('/')[2]
      const op = url.searchParams.get('op')
      const key = `${labels}:${op}`
      if (!(key in state.metrics)) return json({ detail: `no metric ${key}` }, 404)
      return json(state.metrics[key])
    }
    if (url.pathname.startsWith('/export/')) {
      const artifact = url.pathname.split('/')[2]
      if (!(artifact in state.exports)) return json({ detail: 'unknown artifact' }, 404)
      return new Response(state.exports[artifact], {
        status: 200,
        headers: { 'content-type': 'text/csv' }
      })
    }
    return json({ detail: `stub: unhandled ${method} ${url.pathname}` }, 404)
  }

  return { state, fetchFn }
}

export const runningSnapshot = (progress: number, lines: string[]): JobSnapshot => ({
  id: 'job-1',
  kind: 'filter',
  state: 'running',
  progress,
  history: lines.map((line, i) => ({ t: i, line })),
  error: null,
  results: [],
  manifest: null
})

export const doneSnapshot = (lines: string[], results: string[] = ['filtered']): JobSnapshot => ({
  id: 'job-1',
  kind: 'filter',
  state: 'done',
  progress: 1,
  history: lines.map((line, i) => ({ t: i, line })),
  error: null,
  results,
  manifest: { outputs: {} }
})

export const cancelledSnapshot = (lines: string[]): JobSnapshot => ({
  id: 'job-1',
  kind: 'filter',
  state: 'cancelled',
  progress: 0.4,
  history: lines.map((line, i) => ({ t: i, line })),
  error: null,
  results: [],
  manifest: null
})
