/**
 * Zoom/pan between screen pixels and voxel coordinates of the displayed
 * slice. The transform is screen = voxel * scale + offset; the cursor
 * readout inverts it, so a pick made at any zoom lands on the same voxel
 * the user sees under the crosshair.
 */
export class ViewTransform {
  scale = 1
  offsetX = 0
  offsetY = 0

  reset(): void {
    this.scale = 1
    this.offsetX = 0
    this.offsetY = 0
  }

  voxelToScreen(vx: number, vy: number): { sx: number; sy: number } {
    return { sx: vx * this.scale + this.offsetX, sy: vy * this.scale + this.offsetY }
  }

  screenToVoxel(sx: number, sy: number): { x: number; y: number } {
    return { x: (sx - this.offsetX) / this.scale, y: (sy - this.offsetY) / this.scale }
  }

  /** Integer voxel under a screen point (display convention: floor). */
  voxelAt(sx: number, sy: number): { x: number; y: number } {
    const p = this.screenToVoxel(sx, sy)
    return { x: Math.floor(p.x), y: Math.floor(p.y) }
  }

  /** Zoom by a factor keeping the voxel under (sx, sy) fixed on screen. */
  zoomAt(sx: number, sy: number, factor: number): void {
    const anchor = this.screenToVoxel(sx, sy)
    this.scale *= factor
    this.offsetX = sx - anchor.x * this.scale
    this.offsetY = sy - anchor.y * this.scale
  }

  pan(dx: number, dy: number): void {
    this.offsetX += dx
    this.offsetY += dy
  }
}
