# Generated by Django 5.0.1 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('gen_data', 'Dataset generation'), ('train', 'Training'), ('eval', 'Evaluation'), ('sweep', 'Parameter sweep'), ('report', 'Report')], max_length=20)),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('failed', 'Failed'), ('diverged', 'Diverged')], default='completed', max_length=20)),
                ('config_hash', models.CharField(blank=True, help_text='Hash of the validated configuration', max_length=64)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('output_path', models.CharField(blank=True, max_length=500)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('message', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'verbose_name': 'Experiment run',
                'verbose_name_plural': 'Experiment runs',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['kind', 'status'], name='vqccs_run_kind_status_idx'), models.Index(fields=['config_hash'], name='vqccs_run_config_hash_idx')],
            },
        ),
    ]
