import type { Geometry, Roi, ViewState } from './types'

/** Session id lives in the URL so a reload lands back in the same session. */
export const sessionFromUrl = (search: string = window.location.search): string | null =>
  new URLSearchParams(search).get('session')

export const writeSessionToUrl = (session: string): void => {
  const url = new URL(window.location.href)
  url.searchParams.set('session', session)
  window.history.replaceState(null, '', url.toString())
}

export class AppState {
  session: string | null = null
  geometry: Geometry | null = null
  roi: Roi | null = null
  view: ViewState = { z: 0, window: [0, 65535], layer: 'raw', overlayOpacity: 0.5 }

  clampZ(z: number): number {
    const nz = this.geometry?.nz ?? 1
    return Math.min(Math.max(Math.round(z), 0), nz - 1)
  }

  setWindow(lo: number, hi: number): void {
    if (!(lo < hi)) throw new Error(`display window needs lo < hi, got (${lo}, ${hi})`)
    this.view.window = [lo, hi]
  }
}
