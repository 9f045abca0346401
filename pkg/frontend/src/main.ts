import { ApiClient } from './api.js'
import { ExplorerApp, type AppElements } from './app.js'

function el<T extends Element>(id: string): T {
    const node = document.getElementById(id)
    if (!node) throw new Error(`missing element #${id}`)
    return node as unknown as T
}

const params = new URLSearchParams(window.location.search)
const base = params.get('api') ?? 'http://127.0.0.1:8000'

const elements: AppElements = {
    map: el<HTMLCanvasElement>('map'),
    legend: el<HTMLCanvasElement>('legend'),
    banner: el<HTMLElement>('banner'),
    hover: el<HTMLElement>('hover'),
    panel: el<HTMLElement>('panel'),
    overlayToggle: el<HTMLInputElement>('overlay-toggle'),
    methodSelect: el<HTMLSelectElement>('method-select'),
    paramInput: el<HTMLInputElement>('param-input'),
    resetButton: el<HTMLElement>('reset-view'),
}

const app = new ExplorerApp(new ApiClient(base), elements)
app.start().catch((err) => {
    elements.banner.textContent = `failed to reach ${base}: ${err}`
    elements.banner.style.display = 'block'
})
