import base64
import io
import os

import matplotlib
import numpy as np
from jinja2 import Environment, FileSystemLoader
from matplotlib import pyplot as plt
from openpyxl import Workbook
from openpyxl.styles import Border, Font, Side
from prettytable import ALL, PrettyTable

matplotlib.use('Agg')

HTML_TEMPLATE_PATH = r'report_template.html'

bool_naming = {
    True: 'Да',
    False: 'Нет'
}


def format_rate(value):
    """
    Форматирует долю как процент

    >>> format_rate(0.25)
    '25.00%'
    >>> format_rate(None)
    '-'
    """
    if value is None:
        return '-'
    return f'{100 * value:.2f}%'


def write_workbook(filename, sheets, bold_titles=True, borders=True):
    """
    Сохраняет листы в excel файл
    :param filename: Путь к файлу
    :param sheets: Листы (название, заголовки, строки)
    :type sheets: Iterable[Tuple[str, List[str], List[list]]]
    :param bold_titles: Жирные заголовки
    :param borders: Рамки у ячеек
    :return: None

    >>> write_workbook('x.xlsx', [('Лист', ['a', 'b'], [[1]])])
    Traceback (most recent call last):
     ...
    ValueError: Sheet "Лист": row 1 has 1 cells for 2 headers
    """
    sheets = list(sheets)
    for title, headers, rows in sheets:
        for row_id, row in enumerate(rows, start=1):
            if len(row) != len(headers):
                raise ValueError(f'Sheet "{title}": row {row_id} has {len(row)} cells for {len(headers)} headers')
    wb = Workbook()
    side = Side(style='thin', color="000000")
    for i, (title, headers, rows) in enumerate(sheets):
        ws = wb.active if i == 0 else wb.create_sheet()
        ws.title = title
        for row_id, values in enumerate([headers] + list(rows), start=1):
            for column_id, value in enumerate(values, start=1):
                cell = ws.cell(row=row_id, column=column_id, value=value)
                if borders:
                    cell.border = Border(left=side, top=side, right=side, bottom=side)
                if row_id == 1 and bold_titles:
                    cell.font = Font(bold=True)
        # max row len + 1 to make numbers visible
        dims = {}
        for row in ws.rows:
            for cell in row:
                if cell.value is not None:
                    dims[cell.column_letter] = max(dims.get(cell.column_letter, 0), len(str(cell.value)) + 1)
        for col, value in dims.items():
            ws.column_dimensions[col].width = value
    wb.save(filename)


class ReportGraphic:
    """
    Класс для графика безопасности: ложные срабатывания на чистом тесте, точность
    классификации аугментаций на аугментированном тесте и, если есть, точность задачи при обучении с каждой аугментацией.
    Красная линия - точность задачи без аугментаций
    """

    def __init__(self):
        plt.rcdefaults()
        self._fig, self._ax = plt.subplots(figsize=(12, 6))

    def save_picture(self, filename):
        """
        Сохраняет график в виде изображения
        :param filename: Путь к файлу
        :return: None
        """
        self._fig.tight_layout()
        self._fig.savefig(filename)
        plt.close(self._fig)

    def get_png_base64_bytes(self):
        """
        Возвращает изображение графика в виде байтов base64
        :rtype: bytes
        """
        io_bytes = io.BytesIO()
        self._fig.tight_layout()
        self._fig.savefig(io_bytes, format='png')
        plt.close(self._fig)
        io_bytes.seek(0)
        return base64.b64encode(io_bytes.read())

    def set_safety_report(self, report):
        """
        Рисует столбцы по каждой аугментации
        :param report: Отчет
        :type report: SafetyReport
        :return: None
        """
        metrics = report.metrics
        labels = list(metrics.label_names)
        series = [('Ложные срабатывания (чистый тест)', [100 * v for v in metrics.clean_fp_rate]),
                  ('Классификация аугментаций', [100 * v for v in metrics.aug_accuracy])]
        if report.task_accuracies is not None:
            series.append(('Классификация изображений', [report.task_accuracies.get(name, 0) for name in labels]))

        x = np.arange(len(labels))
        width = 0.8 / len(series)
        for i, (name, values) in enumerate(series):
            self._ax.bar(x + (i - (len(series) - 1) / 2) * width, values, width, label=name)
        if report.reference_accuracy is not None:
            self._ax.axhline(report.reference_accuracy, color='red', label='Без аугментаций')

        safe = [name in report.safe_set for name in labels]
        self._ax.set_xticks(x, [f'{name}{" *" if s else ""}' for name, s in zip(labels, safe)], fontsize=8,
                            rotation=90)
        self._ax.set_ylim(0, 100)
        self._ax.set_ylabel('%')
        self._ax.set_title('Классификация изображений и аугментаций (* - безопасные)')
        self._ax.tick_params(axis='y', labelsize=8)
        self._ax.legend(fontsize=8)
        self._ax.yaxis.grid(True)


class SweepGraphic:
    """
    График точности от размера подмножества для наборов All и Safe
    """

    def __init__(self):
        plt.rcdefaults()
        self._fig, self._ax = plt.subplots(figsize=(8, 5))

    def set_sweep_rows(self, rows, metric_name='top1'):
        """
        :param rows: Строки (size, set, accuracy)
        :type rows: List[dict]
        :return: None
        """
        for set_name in sorted({row['set'] for row in rows}):
            points = sorted((row['size'], row['accuracy']) for row in rows if row['set'] == set_name)
            self._ax.plot([p[0] for p in points], [p[1] for p in points], marker='o', label=set_name)
        self._ax.set_xlabel('Размер подмножества')
        self._ax.set_ylabel(f'{metric_name}, %')
        self._ax.set_title('Точность в зависимости от размера подмножества')
        self._ax.legend(fontsize=8)
        self._ax.grid(True)

    def save_picture(self, filename):
        self._fig.tight_layout()
        self._fig.savefig(filename)
        plt.close(self._fig)


class Report:
    """
    Класс репорта безопасных аугментаций

    Attributes:
        report (SafetyReport): Содержимое отчета
    """

    def __init__(self, report):
        self.report = report

    def print(self):
        """
        Печатает репорт в консоль
        :return: None
        """
        print(create_safety_table(self.report.rows()))
        thresholds = self.report.thresholds
        if thresholds is not None:
            print(f'Пороги: fp_max={thresholds.fp_max}, acc_max={thresholds.acc_max}, '
                  f'порог решения={thresholds.decision_threshold}')
        print('Безопасные аугментации:', ', '.join(self.report.safe_set.members) or 'нет')
        if self.report.reference_accuracy is not None:
            print(f'Точность без аугментаций: {self.report.reference_accuracy:.2f}%')

    def _get_table(self):
        metrics = self.report.metrics
        headers = ['Аугментация', 'Ложные срабатывания', 'Точность классификации аугментаций', 'Полнота',
                   'Срабатываний', 'Безопасная']
        task = self.report.task_accuracies
        if task is not None:
            headers.append('Точность задачи, %')
        rows = []
        for i, name in enumerate(metrics.label_names):
            row = [name, format_rate(metrics.clean_fp_rate[i]), format_rate(metrics.aug_accuracy[i]),
                   format_rate(metrics.aug_recall[i]), metrics.fired_counts[i],
                   bool_naming[name in self.report.safe_set]]
            if task is not None:
                row.append(task.get(name))
            rows.append(row)
        return headers, rows

    def generate_excel(self, filename, bold_titles=True, borders=True):
        """
        Генерирует excel файл
        :param filename: Путь к файлу с таблицей
        :param bold_titles: Жирные заголовки
        :param borders: Есть ли рамки у ячеек
        :return: None
        """
        headers, rows = self._get_table()
        write_workbook(filename, [('Аугментации', headers, rows)], bold_titles, borders)

    def generate_image(self, filename):
        """
        Генерирует изображение графика и сохраняет его
        :param filename: Путь к файлу с изображением
        :return: None
        """
        graphic = ReportGraphic()
        graphic.set_safety_report(self.report)
        graphic.save_picture(filename)

    def _get_base64_png(self):
        graphic = ReportGraphic()
        graphic.set_safety_report(self.report)
        return graphic.get_png_base64_bytes().decode("utf-8")

    def generate_html(self, filename):
        """
        Генерирует HTML страницу с графиком и таблицей
        :param filename: Путь к HTML файлу
        :return: None
        """
        headers, rows = self._get_table()

        env = Environment(loader=FileSystemLoader(os.path.join(os.path.dirname(__file__))), autoescape=True)
        template = env.get_template(HTML_TEMPLATE_PATH)
        html = template.render({
            'run_id': self.report.run_id,
            'thresholds': self.report.thresholds,
            'safe_members': self.report.safe_set.members,
            'reference_accuracy': self.report.reference_accuracy,
            'graph_bytes': self._get_base64_png(),
        },
            headers=headers,
            rows=rows,
        )
        with open(filename, 'w', encoding='utf-8') as file:
            file.write(html)


def _create_table(field_names, rows):
    table = PrettyTable()
    table.hrules = ALL
    table.field_names = field_names
    table.align = 'l'
    table.max_width = 30
    for row in rows:
        table.add_row(row)
    return table


def create_safety_table(rows):
    """
    Создает таблицу метрик по аугментациям для консоли
    :param rows: Строки SafetyReport.rows()
    :rtype: PrettyTable
    """
    with_task = any('task_accuracy' in row for row in rows)
    field_names = ['№', 'Аугментация', 'Ложные срабатывания', 'Точность на аугментациях', 'Полнота', 'Безопасная']
    if with_task:
        field_names.append('Точность задачи')
    table_rows = []
    for n, row in enumerate(rows, start=1):
        values = [str(n), row['name'], format_rate(row['clean_fp_rate']), format_rate(row['aug_accuracy']),
                  format_rate(row['aug_recall']), bool_naming[row['safe']]]
        if with_task:
            task_accuracy = row.get('task_accuracy')
            values.append('-' if task_accuracy is None else f'{task_accuracy:.2f}%')
        table_rows.append(values)
    return _create_table(field_names, table_rows)


def create_catalog_table(aug_set):
    """
    Создает таблицу каталога преобразований
    :param aug_set: Набор преобразований
    :type aug_set: AugmentationSet
    :rtype: PrettyTable
    """
    rows = []
    for spec in aug_set:
        params = ', '.join(f'{k}={v}' for k, v in spec.params.items()) or '-'
        rows.append([str(aug_set.label_index(spec.name)), spec.name, params, str(spec.probability)])
    return _create_table(['Метка', 'Преобразование', 'Параметры', 'p'], rows)


def create_sweep_table(rows):
    """
    Создает таблицу результатов перебора размера подмножества
    :param rows: Строки (size, set, accuracy, runs)
    :rtype: PrettyTable
    """
    return _create_table(['Размер', 'Набор', 'Метрика, %', 'Запуски'],
                         [[str(row['size']), row['set'], f'{row["accuracy"]:.2f}', ', '.join(row['runs'])]
                          for row in rows])


def create_runs_table(frame):
    """
    Создает таблицу запусков реестра
    :param frame: Таблица запусков
    :type frame: pd.DataFrame
    :rtype: PrettyTable
    """
    rows = [['-' if value is None or value != value else str(value) for value in row]
            for row in frame.itertuples(index=False)]
    return _create_table(list(frame.columns), rows)


def generate_sweep_excel(rows, filename):
    """
    Сохраняет таблицу перебора размера подмножества в excel, по листу на набор
    :param rows: Строки (size, set, accuracy)
    :param filename: Путь к файлу
    :return: None
    """
    write_workbook(filename, [(set_name, ['Размер подмножества', 'Метрика, %'],
                               sorted([row['size'], row['accuracy']] for row in rows if row['set'] == set_name))
                              for set_name in sorted({row['set'] for row in rows})])
