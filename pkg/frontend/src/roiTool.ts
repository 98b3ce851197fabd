import type { ApiClient } from './api'
import type { Geometry, Roi } from './types'

interface DragState {
  x0: number
  y0: number
  x1: number
  y1: number
}

/**
 * Rectangle-drag ROI selection plus a z range. What the UI considers "the
 * ROI" is always what the server echoed back last, never the local drag
 * rectangle: commit() PUTs the draft and then re-reads /roi.
 */
export class RoiTool {
  private drag: DragState | null = null
  draft: Roi | null = null
  applied: Roi | null = null
  zFrom = 0
  zTo = 0

  constructor(
    private readonly api: ApiClient,
    private readonly geometry: Geometry
  ) {
    this.zTo = geometry.nz - 1
  }

  begin(voxel: { x: number; y: number }): void {
    this.drag = { x0: voxel.x, y0: voxel.y, x1: voxel.x, y1: voxel.y }
  }

  update(voxel: { x: number; y: number }): void {
    if (!this.drag) return
    this.drag.x1 = voxel.x
    this.drag.y1 = voxel.y
  }

  /** Normalize the drag into an integer in-bounds ROI draft. */
  end(): Roi | null {
    if (!this.drag) return null
    const { nx, ny, nz } = this.geometry
    const clamp = (v: number, hi: number) => Math.min(Math.max(Math.round(v), 0), hi)
    const xa = clamp(Math.min(this.drag.x0, this.drag.x1), nx - 1)
    const xb = clamp(Math.max(this.drag.x0, this.drag.x1), nx - 1)
    const ya = clamp(Math.min(this.drag.y0, this.drag.y1), ny - 1)
    const yb = clamp(Math.max(this.drag.y0, this.drag.y1), ny - 1)
    const za = clamp(Math.min(this.zFrom, this.zTo), nz - 1)
    const zb = clamp(Math.max(this.zFrom, this.zTo), nz - 1)
    this.drag = null
    this.draft = {
      x0: xa,
      y0: ya,
      z0: za,
      dx: xb - xa + 1,
      dy: yb - ya + 1,
      dz: zb - za + 1
    }
    return this.draft
  }

  fullFrame(): Roi {
    const { nx, ny, nz } = this.geometry
    this.draft = { x0: 0, y0: 0, z0: 0, dx: nx, dy: ny, dz: nz }
    return this.draft
  }

  /** Send the draft; the applied ROI is re-read from the server. */
  async commit(session: string): Promise<Roi | null> {
    if (!this.draft) throw new Error('no ROI drawn yet')
    await this.api.putRoi(session, this.draft)
    return this.reload(session)
  }

  async reload(session: string): Promise<Roi | null> {
    const { roi } = await this.api.getRoi(session)
    this.applied = roi
    return roi
  }
}
