import type { FractionsMetrics, PsdMetrics, TrendMetrics } from './types'

/**
 * Chart view models. These carry API numbers through verbatim: labels are
 * built with plain string interpolation of the response values and the
 * series arrays are the response arrays, so nothing on screen was computed
 * in the browser.
 */

export interface TrendView {
  points: { slice: number; porosity: number }[]
  fit: { slope: number; intercept: number }
  r2Label: string
  meanLabel: string
}

export const buildTrendView = (m: TrendMetrics): TrendView => ({
  points: m.slice.map((s, i) => ({ slice: s, porosity: m.porosity[i] })),
  fit: { slope: m.slope, intercept: m.intercept },
  r2Label: `R² = ${m.r_squared}`,
  meanLabel: `porosity ${m.mean} ± ${m.std}`
})

export interface PsdView {
  empty: boolean
  message: string
  bars: { center: number; count: number }[]
  summaryLabel: string
}

export const buildPsdView = (m: PsdMetrics): PsdView => {
  if (m.region_count === 0 || m.diameters.length === 0) {
    return { empty: true, message: 'no pore regions in this volume', bars: [], summaryLabel: '' }
  }
  return {
    empty: false,
    message: '',
    bars: m.hist_centers.map((c, i) => ({ center: c, count: m.hist_counts[i] })),
    summaryLabel: `${m.region_count} regions, d = ${m.mean} ± ${m.std} µm`
  }
}

export interface FractionsView {
  bars: { label: string; fraction: number }[]
}

export const buildFractionsView = (m: FractionsMetrics): FractionsView => ({
  bars: Object.entries(m).map(([label, fraction]) => ({ label, fraction }))
})

/** Parse a two-or-more-column CSV of numbers (header row first). */
export const parseCsv = (text: string): Record<string, (number | string)[]> => {
  const lines = text.replace(/\r\n/g, '\n').split('\n').filter((l) => l.length > 0)
  if (lines.length === 0) return {}
  const headers = lines[0].split(',')
  const cols: Record<string, (number | string)[]> = {}
  for (const h of headers) cols[h] = []
  for (const line of lines.slice(1)) {
    const cells = line.split(',')
    headers.forEach((h, i) => {
      const raw = cells[i] ?? ''
      const num = Number(raw)
      cols[h].push(raw !== '' && Number.isFinite(num) ? num : raw)
    })
  }
  return cols
}

// --- canvas rendering (presentation only, no numbers invented here) ---

const margin = 36

const frame = (ctx: CanvasRenderingContext2D, w: number, h: number) => {
  ctx.clearRect(0, 0, w, h)
  ctx.strokeStyle = '#888'
  ctx.strokeRect(margin, margin / 2, w - margin * 1.5, h - margin * 1.5)
}

export const drawTrend = (ctx: CanvasRenderingContext2D, view: TrendView): void => {
  const { width: w, height: h } = ctx.canvas
  frame(ctx, w, h)
  if (view.points.length === 0) return
  const xs = view.points.map((p) => p.slice)
  const ys = view.points.map((p) => p.porosity)
  const xMax = Math.max(...xs, 1)
  const yMax = Math.max(...ys, 1e-9)
  const px = (x: number) => margin + (x / xMax) * (w - margin * 1.5)
  const py = (y: number) => h - margin + -((y / yMax) * (h - margin * 1.5))
  ctx.strokeStyle = '#1f77b4'
  ctx.beginPath()
  view.points.forEach((p, i) => (i === 0 ? ctx.moveTo(px(p.slice), py(p.porosity)) : ctx.lineTo(px(p.slice), py(p.porosity))))
  ctx.stroke()
  ctx.strokeStyle = '#d62728'
  ctx.beginPath()
  ctx.moveTo(px(0), py(view.fit.intercept))
  ctx.lineTo(px(xMax), py(view.fit.slope * xMax + view.fit.intercept))
  ctx.stroke()
  ctx.fillStyle = '#222'
  ctx.fillText(view.r2Label, margin + 4, margin / 2 + 12)
  ctx.fillText(view.meanLabel, margin + 4, margin / 2 + 26)
}

export const drawBars = (
  ctx: CanvasRenderingContext2D,
  bars: { label?: string; center?: number; count?: number; fraction?: number }[],
  caption: string
): void => {
  const { width: w, height: h } = ctx.canvas
  frame(ctx, w, h)
  if (bars.length === 0) return
  const values = bars.map((b) => b.count ?? b.fraction ?? 0)
  const vMax = Math.max(...values, 1e-9)
  const bw = (w - margin * 1.5) / bars.length
  ctx.fillStyle = '#2ca02c'
  bars.forEach((b, i) => {
    const v = (b.count ?? b.fraction ?? 0) / vMax
    ctx.fillRect(margin + i * bw + 1, h - margin - v * (h - margin * 1.5), bw - 2, v * (h - margin * 1.5))
  })
  ctx.fillStyle = '#222'
  ctx.fillText(caption, margin + 4, margin / 2 + 12)
}
