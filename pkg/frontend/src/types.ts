export interface Roi {
  x0: number
  y0: number
  z0: number
  dx: number
  dy: number
  dz: number
}

export interface Geometry {
  nx: number
  ny: number
  nz: number
  bit_depth: number
  voxel_size: number
}

// mirrors the server's training-table row; the swatch stays client-side
export interface PickRow {
  class_id: number
  feature_name: string
  x: number
  y: number
  slice: number
  color: string
}

export interface HistoryLine {
  t: number
  line: string
}

export interface JobSnapshot {
  id: string
  kind: string
  state: 'queued' | 'running' | 'done' | 'failed' | 'cancelled'
  progress: number
  history: HistoryLine[]
  error: string | null
  results: string[]
  manifest: Record<string, unknown> | null
}

export type Layer = 'raw' | 'filtered' | 'labels'

export interface ViewState {
  z: number
  window: [number, number]
  layer: Layer
  overlayOpacity: number
}

export interface TrendMetrics {
  slice: number[]
  porosity: number[]
  slope: number
  intercept: number
  r_squared: number
  mean: number
  std: number
}

export interface PsdMetrics {
  diameters: number[]
  mean: number
  std: number
  region_count: number
  hist_counts: number[]
  hist_centers: number[]
}

export type FractionsMetrics = Record<string, number>
