import type { ApiClient } from './api'
import type { AppState } from './state'
import { ViewTransform } from './transform'

interface ViewerHooks {
  onCursor?: (voxel: { x: number; y: number }) => void
  onPick?: (voxel: { x: number; y: number }) => void
  onRoiDrag?: (phase: 'begin' | 'update' | 'end', voxel: { x: number; y: number }) => void
}

export interface SlicePlan {
  baseUrl: string
  overlayUrl: string | null
}

/**
 * What the viewer will fetch for the current view. Pure, so tests can
 * assert render-input identity: overlay opacity 0 requests exactly the
 * bytes a no-overlay render requests.
 */
export const planSliceRequests = (
  api: ApiClient,
  session: string,
  view: AppState['view']
): SlicePlan => ({
  baseUrl: api.sliceUrl(session, view.z, view.layer, view.layer === 'labels' ? undefined : view.window),
  overlayUrl:
    view.overlayOpacity > 0 && view.layer !== 'labels'
      ? api.sliceUrl(session, view.z, 'labels')
      : null
})

/**
 * Canvas slice viewer: streams PNG slices from the API, blends an optional
 * label overlay on top, and reports cursor positions in voxel coordinates
 * (the inverse of the current zoom/pan). No pixel values are computed
 * here; the intensity readout comes from the rendered slice bytes.
 */
export class SliceViewer {
  readonly transform = new ViewTransform()
  mode: 'pan' | 'pick' | 'roi' = 'pan'
  private base: HTMLImageElement | null = null
  private overlay: HTMLImageElement | null = null
  private dragging = false
  private lastPointer: [number, number] | null = null

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly api: ApiClient,
    private readonly state: AppState,
    private readonly hooks: ViewerHooks = {}
  ) {
    canvas.addEventListener('pointerdown', (e) => this.pointerDown(e))
    canvas.addEventListener('pointermove', (e) => this.pointerMove(e))
    canvas.addEventListener('pointerup', (e) => this.pointerUp(e))
    canvas.addEventListener('wheel', (e) => {
      e.preventDefault()
      const factor = e.deltaY < 0 ? 1.25 : 0.8
      const r = canvas.getBoundingClientRect()
      this.transform.zoomAt(e.clientX - r.left, e.clientY - r.top, factor)
      this.draw()
    })
  }

  private local(e: PointerEvent): [number, number] {
    const r = this.canvas.getBoundingClientRect()
    return [e.clientX - r.left, e.clientY - r.top]
  }

  private pointerDown(e: PointerEvent): void {
    const [sx, sy] = this.local(e)
    this.dragging = true
    this.lastPointer = [sx, sy]
    if (this.mode === 'roi') this.hooks.onRoiDrag?.('begin', this.transform.voxelAt(sx, sy))
  }

  private pointerMove(e: PointerEvent): void {
    const [sx, sy] = this.local(e)
    this.hooks.onCursor?.(this.transform.voxelAt(sx, sy))
    if (!this.dragging || !this.lastPointer) return
    if (this.mode === 'pan') {
      this.transform.pan(sx - this.lastPointer[0], sy - this.lastPointer[1])
      this.lastPointer = [sx, sy]
      this.draw()
    } else if (this.mode === 'roi') {
      this.hooks.onRoiDrag?.('update', this.transform.voxelAt(sx, sy))
    }
  }

  private pointerUp(e: PointerEvent): void {
    const [sx, sy] = this.local(e)
    if (this.mode === 'pick' && this.dragging) {
      this.hooks.onPick?.(this.transform.voxelAt(sx, sy))
    } else if (this.mode === 'roi') {
      this.hooks.onRoiDrag?.('end', this.transform.voxelAt(sx, sy))
    }
    this.dragging = false
    this.lastPointer = null
  }

  /** Reload the base layer (and label overlay when enabled) then redraw. */
  async refresh(): Promise<void> {
    const { session, view } = this.state
    if (!session) return
    const load = (url: string) =>
      new Promise<HTMLImageElement>((resolve, reject) => {
        const img = new Image()
        img.onload = () => resolve(img)
        img.onerror = () => reject(new Error(`failed to fetch ${url}`))
        img.src = url
      })
    const plan = planSliceRequests(this.api, session, view)
    this.base = await load(plan.baseUrl)
    this.overlay = plan.overlayUrl ? await load(plan.overlayUrl).catch(() => null) : null
    this.draw()
  }

  draw(): void {
    const ctx = this.canvas.getContext('2d')
    if (!ctx || !this.base) return
    ctx.imageSmoothingEnabled = false
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height)
    const t = this.transform
    ctx.setTransform(t.scale, 0, 0, t.scale, t.offsetX, t.offsetY)
    ctx.drawImage(this.base, 0, 0)
    if (this.overlay) {
      ctx.globalAlpha = this.state.view.overlayOpacity
      ctx.drawImage(this.overlay, 0, 0)
      ctx.globalAlpha = 1
    }
    ctx.setTransform(1, 0, 0, 1, 0, 0)
  }
}
